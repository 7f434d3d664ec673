// Wire types mirroring the service's canonical JSON schemas (docs/schemas.md).

export interface ProductJson {
  name: string;
  brand: string | null;
  url: string | null;
  price: string | null;
  currency: string | null;
  description: string | null;
  source: string;
}

export interface RecommendationJson {
  product: ProductJson;
  rank: number;
  rationale: string;
  agent_id: string;
}

export interface MarketReportJson {
  topic: string;
  summary: string;
  sources: string[];
  generated_at: string;
}

export interface FollowupJson {
  question_id: string;
  text: string;
  answered: boolean;
  answer: string | null;
}

export interface ImageJson {
  bytes: string;
  media_type: string;
  caption: string | null;
}

export interface QueryJson {
  text: string;
  image: ImageJson | null;
  session_id: string;
  timestamp: string;
}

export interface TurnResponse {
  query: QueryJson;
  recommendations: RecommendationJson[];
  image_answer: string | null;
  market_report: MarketReportJson | null;
  trace_id: string;
  pending_followups: FollowupJson[];
}

export interface SessionJson {
  session_id: string;
  user_id: string;
  turns: Omit<TurnResponse, "pending_followups">[];
  pending_followups: FollowupJson[];
}

export interface RougeJson {
  precision: number;
  recall: number;
  f: number;
}

export interface MetricRowJson {
  model_id: string;
  agent: string;
  p_at_k: number | null;
  r_at_k: number | null;
  f1: number | null;
  mrr: number | null;
  ndcg: number | null;
  rouge1: RougeJson | null;
  rouge2: RougeJson | null;
  rougeL: RougeJson | null;
}

export interface ReportsJson {
  rows: MetricRowJson[];
  system: Record<string, number>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}
