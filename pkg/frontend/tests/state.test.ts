import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  initialState,
  promptCleared,
  requestFailed,
  requestStarted,
  sessionStarted,
  turnReceived,
} from "../src/state.js";
import type { TurnResponse } from "../src/types.js";

const FIXTURES = join(__dirname, "fixtures");

function fixture(name: string): TurnResponse {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as TurnResponse;
}

const textTurn = fixture("turn_text.json");
const imageTurn = fixture("turn_image.json");
const refinedTurn = fixture("turn_refined.json");

describe("console state over recorded server responses", () => {
  it("starts a session with an empty conversation", () => {
    const state = sessionStarted(initialState(), "abc123", "u1");
    expect(state.sessionId).toBe("abc123");
    expect(state.turns).toEqual([]);
    expect(state.prompts).toEqual([]);
  });

  it("appends turns in server order", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = turnReceived(state, textTurn);
    state = turnReceived(state, imageTurn);
    expect(state.turns.map((t) => t.turn.query.text)).toEqual([
      "best running shoes",
      "what shoe is this?",
    ]);
  });

  it("mirrors pending followups from the latest response", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = turnReceived(state, textTurn);
    expect(state.prompts).toEqual([]);
    state = turnReceived(state, imageTurn);
    expect(state.prompts).toEqual([
      { questionId: "4b2335e722f5", text: "What is your budget?" },
    ]);
    state = turnReceived(state, refinedTurn);
    expect(state.prompts).toEqual([]);
    expect(state.turns).toHaveLength(3);
  });

  it("derives the thumbnail from the echoed query image only", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = turnReceived(state, textTurn);
    state = turnReceived(state, imageTurn);
    expect(state.turns[0].thumbnail).toBeNull();
    expect(state.turns[1].thumbnail).toBe(
      `data:image/png;base64,${imageTurn.query.image!.bytes}`,
    );
  });

  it("busy flag blocks until a response or failure lands", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = requestStarted(state);
    expect(state.busy).toBe(true);
    state = turnReceived(state, textTurn);
    expect(state.busy).toBe(false);

    state = requestStarted(state);
    state = requestFailed(state, "all agents failed", true);
    expect(state.busy).toBe(false);
    expect(state.banner).toEqual({ kind: "error", text: "all agents failed", retryable: true });
  });

  it("failure never drops already-rendered turns", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = turnReceived(state, textTurn);
    state = requestFailed(state, "boom", false);
    expect(state.turns).toHaveLength(1);
  });

  it("clearing a prompt removes exactly that prompt", () => {
    let state = sessionStarted(initialState(), "s", "u");
    state = turnReceived(state, imageTurn);
    state = promptCleared(state, "4b2335e722f5");
    expect(state.prompts).toEqual([]);
  });

  it("renders only server-supplied recommendation fields", () => {
    // Contract: every card field exists verbatim in the recorded response.
    const rec = textTurn.recommendations[0];
    expect(rec.product.name).toBe("Aero Glide 3");
    expect(rec.rank).toBe(1);
    expect(textTurn.recommendations.map((r) => r.rank)).toEqual([1, 2, 3]);
  });
});
