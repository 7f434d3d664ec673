// Console bootstrap: wires the API client, state machine and renderers into
// the single-page layout (chat on the left, market/report panel on the
// right). One turn request is in flight at a time; inputs disable while the
// server works, matching its per-session serialization.

import { ApiError, ConsoleApi, MAX_IMAGE_BYTES, type ImageUpload } from "./api.js";
import {
  initialState,
  requestFailed,
  requestStarted,
  sessionStarted,
  turnReceived,
  type ConsoleState,
} from "./state.js";
import { renderConversation, renderReports } from "./render.js";
import type { ReportsJson } from "./types.js";

const MEDIA_TYPES: Record<string, string> = {
  "image/png": "png",
  "image/jpeg": "jpeg",
  "image/webp": "webp",
};

export function startConsole(root: HTMLElement, baseUrl: string): void {
  const api = new ConsoleApi(baseUrl);
  let state: ConsoleState = initialState();
  let reports: ReportsJson | null = null;
  let sortKey: string | null = null;
  let pendingImage: ImageUpload | undefined;

  root.innerHTML = `
    <div class="layout">
      <main class="chat">
        <form id="session-form">
          <input id="user-id" placeholder="user id" />
          <button type="submit">Start session</button>
          <span id="session-note"></span>
        </form>
        <div id="conversation"></div>
        <form id="query-form" hidden>
          <input id="query-text" placeholder="Ask for a recommendation..." />
          <input id="query-image" type="file" accept="image/png,image/jpeg,image/webp" />
          <button type="submit" id="query-send">Send</button>
        </form>
      </main>
      <aside class="side">
        <button id="load-reports">Load evaluation report</button>
        <div id="reports"></div>
      </aside>
    </div>`;

  const conversationHost = root.querySelector<HTMLElement>("#conversation")!;
  const reportsHost = root.querySelector<HTMLElement>("#reports")!;
  const sessionForm = root.querySelector<HTMLFormElement>("#session-form")!;
  const sessionNote = root.querySelector<HTMLElement>("#session-note")!;
  const userInput = root.querySelector<HTMLInputElement>("#user-id")!;
  const queryForm = root.querySelector<HTMLFormElement>("#query-form")!;
  const textInput = root.querySelector<HTMLInputElement>("#query-text")!;
  const imageInput = root.querySelector<HTMLInputElement>("#query-image")!;
  const sendButton = root.querySelector<HTMLButtonElement>("#query-send")!;

  function redraw(): void {
    conversationHost.replaceChildren(renderConversation(state, onAnswer));
    textInput.disabled = state.busy;
    sendButton.disabled = state.busy;
    queryForm.hidden = state.sessionId === null;
  }

  function redrawReports(): void {
    reportsHost.replaceChildren(
      renderReports(reports, sortKey, (key) => {
        sortKey = key;
        redrawReports();
      }),
    );
  }

  function fail(err: unknown): void {
    const retryable = err instanceof ApiError && (err.status === 0 || err.status >= 500);
    state = requestFailed(state, err instanceof Error ? err.message : String(err), retryable);
    redraw();
  }

  sessionForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    if (!userInput.value.trim()) {
      sessionNote.textContent = "user id must not be blank";
      return;
    }
    sessionNote.textContent = "";
    try {
      const sessionId = await api.startSession(userInput.value);
      state = sessionStarted(state, sessionId, userInput.value.trim());
      sessionNote.textContent = `session ${sessionId.slice(0, 8)}...`;
      redraw();
    } catch (err) {
      fail(err);
    }
  });

  imageInput.addEventListener("change", async () => {
    pendingImage = undefined;
    const file = imageInput.files?.[0];
    if (!file) return;
    if (file.size > MAX_IMAGE_BYTES) {
      fail(new ApiError(0, "client_validation", "image exceeds the 5 MB upload bound"));
      imageInput.value = "";
      return;
    }
    const media = MEDIA_TYPES[file.type];
    if (!media) {
      fail(new ApiError(0, "client_validation", `unsupported image type ${file.type}`));
      imageInput.value = "";
      return;
    }
    const buffer = new Uint8Array(await file.arrayBuffer());
    let binary = "";
    buffer.forEach((b) => (binary += String.fromCharCode(b)));
    pendingImage = { bytes: btoa(binary), media_type: media, byteLength: file.size };
  });

  queryForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    if (state.sessionId === null || state.busy) return;
    const sessionId = state.sessionId;
    state = requestStarted(state);
    redraw();
    try {
      const turn = await api.submitQuery(sessionId, textInput.value, pendingImage);
      state = turnReceived(state, turn);
      textInput.value = "";
      imageInput.value = "";
      pendingImage = undefined;
    } catch (err) {
      // 422/502 render inline; the typed input stays put for editing.
      state = requestFailed(
        state,
        err instanceof Error ? err.message : String(err),
        err instanceof ApiError && err.status >= 500,
      );
    }
    redraw();
  });

  async function onAnswer(questionId: string, text: string): Promise<void> {
    if (state.sessionId === null || state.busy) return;
    if (!text.trim()) {
      state = requestFailed(state, "answer must not be blank", false);
      redraw();
      return;
    }
    const sessionId = state.sessionId;
    state = requestStarted(state);
    redraw();
    try {
      const turn = await api.answerFollowup(sessionId, questionId, text);
      state = turnReceived(state, turn);
    } catch (err) {
      const already = err instanceof ApiError && err.status === 409;
      state = requestFailed(state, already ? "already answered" : String(err), false);
      if (already) {
        state = { ...state, prompts: state.prompts.filter((p) => p.questionId !== questionId) };
      }
    }
    redraw();
  }

  root.querySelector<HTMLButtonElement>("#load-reports")!.addEventListener("click", async () => {
    try {
      reports = await api.getReports();
    } catch (err) {
      reports = null;
      if (!(err instanceof ApiError && err.code === "no_report")) {
        fail(err);
      }
    }
    redrawReports();
  });

  redraw();
  redrawReports();
}

declare global {
  interface Window {
    AGENTREC_API?: string;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const base = window.AGENTREC_API ?? `${location.protocol}//${location.hostname}:8080`;
  startConsole(document.getElementById("app")!, base);
}
