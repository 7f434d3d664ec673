// DOM projection of the console state. Every rendered string traces back to
// an API response field (or a fixed label); nothing is invented here.

import { formatMetric, formatPrice } from "./format.js";
import type { ConsoleState, PendingPrompt, ViewTurn } from "./state.js";
import type { MetricRowJson, ReportsJson } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTurn(view: ViewTurn): HTMLElement {
  const root = el("article", "turn");
  const header = el("header", "turn-query");
  if (view.thumbnail) {
    const img = el("img", "turn-thumbnail");
    img.src = view.thumbnail;
    img.alt = "uploaded product image";
    header.appendChild(img);
  }
  header.appendChild(el("span", "turn-query-text", view.turn.query.text || "(image query)"));
  root.appendChild(header);

  if (view.turn.recommendations.length > 0) {
    const list = el("section", "cards");
    for (const rec of view.turn.recommendations) {
      const card = el("div", "card");
      card.dataset.rank = String(rec.rank);
      card.appendChild(el("div", "card-rank", String(rec.rank)));
      card.appendChild(el("div", "card-name", rec.product.name));
      if (rec.product.brand) card.appendChild(el("div", "card-brand", rec.product.brand));
      const price = formatPrice(rec.product.price, rec.product.currency);
      if (price) card.appendChild(el("div", "card-price", price));
      if (rec.rationale) card.appendChild(el("div", "card-rationale", rec.rationale));
      if (rec.product.url) {
        const link = el("a", "card-link", rec.product.url);
        link.href = rec.product.url;
        link.target = "_blank";
        card.appendChild(link);
      }
      list.appendChild(card);
    }
    root.appendChild(list);
  }

  if (view.turn.image_answer) {
    const panel = el("section", "image-answer");
    panel.appendChild(el("h3", undefined, "Image insights"));
    panel.appendChild(el("p", undefined, view.turn.image_answer));
    root.appendChild(panel);
  }

  if (view.turn.market_report) {
    const panel = el("section", "market-panel");
    panel.appendChild(el("h3", undefined, "Market trends"));
    panel.appendChild(el("p", "market-summary", view.turn.market_report.summary));
    const sources = el("ul", "market-sources");
    for (const url of view.turn.market_report.sources) {
      const item = el("li");
      const link = el("a", undefined, url);
      link.href = url;
      link.target = "_blank";
      item.appendChild(link);
      sources.appendChild(item);
    }
    panel.appendChild(sources);
    root.appendChild(panel);
  }
  return root;
}

export function renderPrompts(
  prompts: PendingPrompt[],
  onAnswer: (questionId: string, text: string) => void,
): HTMLElement {
  const root = el("section", "prompts");
  for (const prompt of prompts) {
    const row = el("form", "prompt");
    row.dataset.questionId = prompt.questionId;
    row.appendChild(el("label", "prompt-text", prompt.text));
    const input = el("input", "prompt-input");
    input.type = "text";
    input.name = "answer";
    row.appendChild(input);
    const button = el("button", "prompt-send", "Answer");
    button.type = "submit";
    row.appendChild(button);
    row.addEventListener("submit", (event) => {
      event.preventDefault();
      onAnswer(prompt.questionId, input.value);
    });
    root.appendChild(row);
  }
  return root;
}

export function renderBanner(state: ConsoleState): HTMLElement | null {
  if (!state.banner) return null;
  const node = el("div", `banner banner-${state.banner.kind}`, state.banner.text);
  if (state.banner.retryable) node.classList.add("banner-retryable");
  return node;
}

const REPORT_COLUMNS: { key: string; label: string; value: (r: MetricRowJson) => number | null }[] = [
  { key: "p_at_k", label: "P@K", value: (r) => r.p_at_k },
  { key: "r_at_k", label: "R@K", value: (r) => r.r_at_k },
  { key: "f1", label: "F-score", value: (r) => r.f1 },
  { key: "mrr", label: "MRR", value: (r) => r.mrr },
  { key: "ndcg", label: "NDCG", value: (r) => r.ndcg },
  { key: "rouge1_f", label: "ROUGE-1 F", value: (r) => r.rouge1?.f ?? null },
  { key: "rouge2_f", label: "ROUGE-2 F", value: (r) => r.rouge2?.f ?? null },
  { key: "rougeL_f", label: "ROUGE-L F", value: (r) => r.rougeL?.f ?? null },
];

export function sortRows(rows: MetricRowJson[], sortKey: string | null): MetricRowJson[] {
  if (!sortKey) return [...rows];
  const column = REPORT_COLUMNS.find((c) => c.key === sortKey);
  if (!column) return [...rows];
  // Descending; rows without the metric sink to the bottom. Stable sort.
  return [...rows].sort((a, b) => {
    const av = column.value(a);
    const bv = column.value(b);
    if (av === null && bv === null) return 0;
    if (av === null) return 1;
    if (bv === null) return -1;
    return bv - av;
  });
}

export function renderReports(
  reports: ReportsJson | null,
  sortKey: string | null,
  onSort: (key: string) => void,
): HTMLElement {
  const root = el("section", "reports");
  root.appendChild(el("h3", undefined, "Evaluation report"));
  if (reports === null) {
    root.appendChild(el("p", "reports-empty", "No evaluation report yet."));
    return root;
  }
  const table = el("table", "reports-table");
  const thead = el("thead");
  const headRow = el("tr");
  headRow.appendChild(el("th", undefined, "Model"));
  headRow.appendChild(el("th", undefined, "Agent"));
  for (const column of REPORT_COLUMNS) {
    const th = el("th", "sortable", column.label);
    th.dataset.key = column.key;
    if (column.key === sortKey) th.classList.add("sorted");
    th.addEventListener("click", () => onSort(column.key));
    headRow.appendChild(th);
  }
  thead.appendChild(headRow);
  table.appendChild(thead);

  const tbody = el("tbody");
  for (const row of sortRows(reports.rows, sortKey)) {
    const tr = el("tr");
    tr.dataset.agent = row.agent;
    tr.appendChild(el("td", undefined, row.model_id));
    tr.appendChild(el("td", undefined, row.agent));
    for (const column of REPORT_COLUMNS) {
      tr.appendChild(el("td", "metric", formatMetric(column.value(row))));
    }
    tbody.appendChild(tr);
  }
  table.appendChild(tbody);
  root.appendChild(table);
  return root;
}

export function renderConversation(
  state: ConsoleState,
  onAnswer: (questionId: string, text: string) => void,
): HTMLElement {
  const root = el("div", "conversation");
  const banner = renderBanner(state);
  if (banner) root.appendChild(banner);
  for (const view of state.turns) {
    root.appendChild(renderTurn(view));
  }
  if (state.prompts.length > 0) {
    root.appendChild(renderPrompts(state.prompts, onAnswer));
  }
  return root;
}
