import { ApiError, configureApi, fetchItem, fetchQueue, fetchTranscript, postApproval, postCorrection } from "./api.js";
import {
  ConsoleState,
  applyCorrection,
  applyItem,
  applyQueue,
  draftFor,
  initialState,
} from "./state.js";
import { Handlers, renderDetail, renderQueue } from "./render.js";

// Controller. One state object, re-rendered wholesale after every change.
// A busy set keeps it to one outstanding mutation per item; the submit
// buttons stay disabled until the server answers.

export function createConsole(root: HTMLElement, baseUrl: string): {
  state: ConsoleState;
  loadCycle(cycleId: string): Promise<void>;
  handlers: Handlers;
} {
  configureApi(baseUrl);
  const state = initialState();

  const queuePane = root.querySelector<HTMLElement>(".queue-pane");
  const detailPane = root.querySelector<HTMLElement>(".detail-pane");
  if (!queuePane || !detailPane) {
    throw new Error("console root needs .queue-pane and .detail-pane children");
  }

  function draw(): void {
    renderQueue(queuePane!, state, handlers);
    renderDetail(detailPane!, state, handlers);
  }

  function describe(err: unknown): string {
    return err instanceof Error ? err.message : String(err);
  }

  async function loadCycle(cycleId: string): Promise<void> {
    state.cycleId = cycleId;
    state.queue = null;
    state.queueError = null;
    draw();
    try {
      const view = await fetchQueue(cycleId);
      applyQueue(state, view.items);
    } catch (err) {
      // No automatic retry: the banner stays up until the reviewer
      // presses the button, so a dead service does not get hammered.
      state.queueError = describe(err);
    }
    draw();
  }

  async function select(itemId: string): Promise<void> {
    state.selectedId = itemId;
    state.conflict = null;
    state.transcript = [];
    draw();
    try {
      const view = await fetchTranscript(itemId);
      if (state.selectedId === itemId) state.transcript = view.transcript;
    } catch {
      // transcript is supplementary; the detail pane still renders
    }
    draw();
  }

  async function refreshItem(itemId: string): Promise<void> {
    try {
      applyItem(state, await fetchItem(itemId));
      state.conflict = null;
    } catch (err) {
      state.conflict = describe(err);
    }
    draw();
  }

  async function submitCorrection(itemId: string, note: string): Promise<void> {
    if (state.busy.has(itemId)) return;
    state.busy.add(itemId);
    draw();
    try {
      applyCorrection(state, await postCorrection(itemId, note));
    } catch (err) {
      state.conflict = describe(err);
    } finally {
      state.busy.delete(itemId);
    }
    draw();
  }

  async function approve(itemId: string, score: number | null): Promise<void> {
    if (state.busy.has(itemId)) return;
    const current = state.queue?.find((i) => i.item_id === itemId);
    if (!current) return;

    state.busy.add(itemId);
    // Optimistic: show the approval immediately, then reconcile with the
    // server's snapshot (or roll back on failure).
    const before = { ...current };
    current.status = "approved";
    current.final_score = score ?? current.model_score;
    draw();

    try {
      applyItem(state, await postApproval(itemId, score));
      state.conflict = null;
      draftFor(state, itemId).scoreText = "";
    } catch (err) {
      Object.assign(current, before);
      if (err instanceof ApiError && err.status === 409) {
        state.conflict = `${describe(err)} (someone else changed this item; refresh to continue)`;
      } else {
        state.conflict = describe(err);
      }
    } finally {
      state.busy.delete(itemId);
    }
    draw();
  }

  const handlers: Handlers = {
    onSelect: (id) => void select(id),
    onRetryQueue: () => void loadCycle(state.cycleId),
    onSubmitCorrection: (id, note) => void submitCorrection(id, note),
    onApprove: (id, score) => void approve(id, score),
    onRefreshItem: (id) => void refreshItem(id),
    onNoteDraft: (id, note) => {
      draftFor(state, id).note = note;
    },
    onScoreDraft: (id, text) => {
      draftFor(state, id).scoreText = text;
    },
  };

  draw();
  return { state, loadCycle, handlers };
}

// Browser entry point. The service address and cycle come from the URL so
// the page itself stays static: ?base=http://host:port&cycle=2025-04
export function boot(): void {
  const root = document.getElementById("console-root");
  if (!root) return;
  const params = new URLSearchParams(window.location.search);
  const base = params.get("base") ?? "http://127.0.0.1:8970";
  const cycle = params.get("cycle") ?? "";

  const app = createConsole(root, base);
  const form = document.getElementById("cycle-form");
  const input = document.getElementById("cycle-input") as HTMLInputElement | null;
  if (form && input) {
    input.value = cycle;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      if (input.value.trim() !== "") void app.loadCycle(input.value.trim());
    });
  }
  if (cycle !== "") void app.loadCycle(cycle);
}

if (typeof document !== "undefined" && document.getElementById("console-root")) {
  boot();
}
