// Console state machine. Pure data + transition functions so the rendering
// layer stays a direct projection of server responses: every turn on screen
// is one server turn, in server order, and follow-up prompts mirror the
// server's pending list from the most recent response.

import type { FollowupJson, TurnResponse } from "./types.js";

export interface ViewTurn {
  turn: TurnResponse;
  expanded: boolean;
  thumbnail: string | null; // data URL derived from the echoed query image
}

export interface PendingPrompt {
  questionId: string;
  text: string;
}

export interface Banner {
  kind: "error" | "info";
  text: string;
  retryable: boolean;
}

export interface ConsoleState {
  sessionId: string | null;
  userId: string | null;
  turns: ViewTurn[];
  prompts: PendingPrompt[];
  busy: boolean;
  banner: Banner | null;
}

export function initialState(): ConsoleState {
  return { sessionId: null, userId: null, turns: [], prompts: [], busy: false, banner: null };
}

export function sessionStarted(state: ConsoleState, sessionId: string, userId: string): ConsoleState {
  return { ...initialState(), sessionId, userId };
}

function toPrompts(followups: FollowupJson[]): PendingPrompt[] {
  return followups.filter((q) => !q.answered).map((q) => ({ questionId: q.question_id, text: q.text }));
}

function thumbnailOf(turn: TurnResponse): string | null {
  const image = turn.query.image;
  if (!image) return null;
  return `data:image/${image.media_type};base64,${image.bytes}`;
}

export function turnReceived(state: ConsoleState, turn: TurnResponse): ConsoleState {
  return {
    ...state,
    turns: [...state.turns, { turn, expanded: true, thumbnail: thumbnailOf(turn) }],
    prompts: toPrompts(turn.pending_followups),
    busy: false,
    banner: null,
  };
}

export function requestStarted(state: ConsoleState): ConsoleState {
  return { ...state, busy: true, banner: null };
}

export function requestFailed(state: ConsoleState, text: string, retryable: boolean): ConsoleState {
  return { ...state, busy: false, banner: { kind: "error", text, retryable } };
}

export function promptCleared(state: ConsoleState, questionId: string): ConsoleState {
  return { ...state, prompts: state.prompts.filter((p) => p.questionId !== questionId) };
}

export function toggleExpanded(state: ConsoleState, index: number): ConsoleState {
  return {
    ...state,
    turns: state.turns.map((t, i) => (i === index ? { ...t, expanded: !t.expanded } : t)),
  };
}
