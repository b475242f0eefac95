import type {
  CorrectionView,
  ReviewItemView,
  Severity,
  TranscriptEntryView,
} from "./types.js";

// The view model: server snapshots plus per-item client drafts. All
// displayed figures come from the snapshots; drafts hold only unsent
// reviewer input, so a reload loses nothing but those.

export interface Drafts {
  note: string;
  scoreText: string;
}

export interface ConsoleState {
  cycleId: string;
  queue: ReviewItemView[] | null; // null = not loaded yet
  queueError: string | null;
  selectedId: string | null;
  transcript: TranscriptEntryView[];
  history: CorrectionView[]; // corrections submitted this session, oldest first
  drafts: Map<string, Drafts>;
  conflict: string | null; // 409 banner text, cleared by refresh
  busy: Set<string>; // item ids with one outstanding mutation
}

export function initialState(cycleId = ""): ConsoleState {
  return {
    cycleId,
    queue: null,
    queueError: null,
    selectedId: null,
    transcript: [],
    history: [],
    drafts: new Map(),
    conflict: null,
    busy: new Set(),
  };
}

export type SeverityGroup = Severity | "clean";

export function worstSeverity(item: ReviewItemView): SeverityGroup {
  if (item.findings.some((f) => f.severity === "error")) return "error";
  if (item.findings.length > 0) return "warning";
  return "clean";
}

export function groupBySeverity(
  items: ReviewItemView[],
): Record<SeverityGroup, ReviewItemView[]> {
  const groups: Record<SeverityGroup, ReviewItemView[]> = {
    error: [],
    warning: [],
    clean: [],
  };
  for (const item of items) groups[worstSeverity(item)].push(item);
  return groups;
}

export function selectedItem(state: ConsoleState): ReviewItemView | null {
  if (!state.queue || state.selectedId === null) return null;
  return state.queue.find((i) => i.item_id === state.selectedId) ?? null;
}

export function draftFor(state: ConsoleState, itemId: string): Drafts {
  let draft = state.drafts.get(itemId);
  if (!draft) {
    draft = { note: "", scoreText: "" };
    state.drafts.set(itemId, draft);
  }
  return draft;
}

export function applyQueue(state: ConsoleState, items: ReviewItemView[]): void {
  state.queue = items;
  state.queueError = null;
  if (state.selectedId && !items.some((i) => i.item_id === state.selectedId)) {
    state.selectedId = null;
  }
}

// Replace the queue copy of one item with a fresh server snapshot.
export function applyItem(state: ConsoleState, item: ReviewItemView): void {
  if (!state.queue) return;
  const at = state.queue.findIndex((i) => i.item_id === item.item_id);
  if (at >= 0) state.queue[at] = item;
  else state.queue.push(item);
}

export function applyCorrection(
  state: ConsoleState,
  correction: CorrectionView,
): void {
  state.history.push(correction);
  applyItem(state, correction.item);
  draftFor(state, correction.item_id).note = "";
}

export function historyFor(
  state: ConsoleState,
  itemId: string,
): CorrectionView[] {
  return state.history.filter((c) => c.item_id === itemId);
}

// Client-side gate for the approve dialog's score field. Empty input
// means "accept the model-reported score". The server validates again.
export type ScoreDraft =
  | { ok: true; value: number | null }
  | { ok: false; reason: string };

export function parseScoreDraft(text: string): ScoreDraft {
  const trimmed = text.trim();
  if (trimmed === "") return { ok: true, value: null };
  if (!/^[+-]?(\d+\.?\d*|\.\d+)$/.test(trimmed)) {
    return { ok: false, reason: "score must be a number" };
  }
  const value = Number(trimmed);
  if (!(value >= 0 && value <= 1)) {
    return { ok: false, reason: "score must be between 0 and 1" };
  }
  return { ok: true, value };
}

// "0.5600" for table cells; scores arrive from the server as numbers.
export function formatScore(value: number | null): string {
  return value === null ? "-" : value.toFixed(4);
}
