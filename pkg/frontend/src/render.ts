import type {
  CorrectionView,
  FindingView,
  ReviewItemView,
  TranscriptEntryView,
} from "./types.js";
import {
  ConsoleState,
  SeverityGroup,
  draftFor,
  formatScore,
  groupBySeverity,
  historyFor,
  parseScoreDraft,
  selectedItem,
} from "./state.js";

// DOM rendering. Single page: the queue on the left, the selected item's
// detail on the right. Every figure shown is a server value; the only
// client-side arithmetic is layout.

export interface Handlers {
  onSelect(itemId: string): void;
  onRetryQueue(): void;
  onSubmitCorrection(itemId: string, note: string): void;
  onApprove(itemId: string, score: number | null): void;
  onRefreshItem(itemId: string): void;
  onNoteDraft(itemId: string, note: string): void;
  onScoreDraft(itemId: string, text: string): void;
}

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

// Values quoted in finding evidence ("reported 0.71 ... give 0.560000")
// are what the reviewer needs to see side by side and find in the
// transcript. Extract them verbatim; never reformat or recompute.
export function evidenceValues(finding: FindingView): string[] {
  return finding.evidence.match(/\d+\.\d+/g) ?? [];
}

function anchorId(itemId: string, code: string, value: string): string {
  return `mark-${itemId}-${code}-${value}`.replace(/[^\w-]/g, "_");
}

// ---------------------------------------------------------------- queue

const GROUP_LABELS: Record<SeverityGroup, string> = {
  error: "errors",
  warning: "warnings",
  clean: "clean",
};

export function renderQueue(
  container: HTMLElement,
  state: ConsoleState,
  handlers: Handlers,
): void {
  container.replaceChildren();

  const heading = el("h2", "queue-heading");
  heading.textContent = state.queue
    ? `Review queue ${state.cycleId}`
    : "Review queue";
  container.append(heading);

  if (state.queueError !== null) {
    const banner = el("div", "banner banner-error");
    banner.setAttribute("role", "alert");
    banner.append(el("span", undefined, state.queueError));
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", () => handlers.onRetryQueue());
    banner.append(retry);
    container.append(banner);
    return;
  }
  if (state.queue === null) {
    const waiting = state.cycleId === ""
      ? "Enter a cycle above to load its review queue."
      : "Loading...";
    container.append(el("p", "muted", waiting));
    return;
  }

  const pending = state.queue.filter((i) => i.status !== "approved");
  if (pending.length === 0) {
    container.append(el("p", "empty-queue", "no pending reviews"));
    return;
  }

  const groups = groupBySeverity(pending);
  for (const severity of ["error", "warning", "clean"] as SeverityGroup[]) {
    const members = groups[severity];
    if (members.length === 0) continue;
    container.append(
      el("h3", `group-heading severity-${severity}`,
        `${GROUP_LABELS[severity]} (${members.length})`),
    );
    const list = el("ul", "item-list");
    for (const item of members) list.append(queueRow(item, severity, state, handlers));
    container.append(list);
  }
}

function queueRow(
  item: ReviewItemView,
  severity: SeverityGroup,
  state: ConsoleState,
  handlers: Handlers,
): HTMLElement {
  const row = el("li", "item-row");
  row.dataset.itemId = item.item_id;
  if (item.item_id === state.selectedId) row.classList.add("selected");

  const badge = el("span", `badge badge-${severity}`, severity);
  const firm = el("span", "firm", item.firm);
  const status = el("span", `status status-${item.status}`, item.status);
  const score = el("span", "score", formatScore(item.model_score));
  const n = item.findings.length;
  const count = el("span", "finding-count", `${n} finding${n === 1 ? "" : "s"}`);

  row.append(badge, firm, status, score, count);
  row.addEventListener("click", () => handlers.onSelect(item.item_id));
  return row;
}

// --------------------------------------------------------------- detail

export function renderDetail(
  container: HTMLElement,
  state: ConsoleState,
  handlers: Handlers,
): void {
  container.replaceChildren();
  const item = selectedItem(state);
  if (!item) {
    container.append(el("p", "muted", "Select an item to review."));
    return;
  }
  const busy = state.busy.has(item.item_id);

  if (state.conflict !== null) {
    const banner = el("div", "banner banner-conflict");
    banner.setAttribute("role", "alert");
    banner.append(el("span", undefined, state.conflict));
    const refresh = el("button", "refresh", "Refresh");
    refresh.addEventListener("click", () => handlers.onRefreshItem(item.item_id));
    banner.append(refresh);
    container.append(banner);
  }

  container.append(detailHeader(item));
  container.append(findingsSection(item));
  container.append(transcriptSection(item, state.transcript));
  container.append(historySection(historyFor(state, item.item_id)));
  if (item.status !== "approved") {
    container.append(correctionComposer(item, state, handlers, busy));
    container.append(approveDialog(item, state, handlers, busy));
  }
}

function detailHeader(item: ReviewItemView): HTMLElement {
  const header = el("div", "detail-header");
  header.append(el("h2", undefined, `${item.firm} ${item.cycle_id}`));
  const meta = el("dl", "meta");
  const rows: [string, string][] = [
    ["provider", item.provider],
    ["strategy", item.strategy],
    ["status", item.status],
    ["model score", formatScore(item.model_score)],
    ["final score", formatScore(item.final_score)],
  ];
  for (const [label, value] of rows) {
    meta.append(el("dt", undefined, label));
    meta.append(el("dd", `meta-${label.replace(" ", "-")}`, value));
  }
  header.append(meta);
  return header;
}

function findingsSection(item: ReviewItemView): HTMLElement {
  const section = el("section", "findings");
  section.append(el("h3", undefined, `Findings (${item.findings.length})`));
  if (item.findings.length === 0) {
    section.append(el("p", "muted", "No findings."));
    return section;
  }
  const list = el("ul", "finding-list");
  for (const finding of item.findings) {
    const entry = el("li", `finding severity-${finding.severity}`);
    entry.append(el("span", `badge badge-${finding.severity}`, finding.severity));
    entry.append(el("span", "finding-code", finding.code));

    // quoted values side by side, each linking to its transcript mark
    const values = el("span", "finding-values");
    for (const value of evidenceValues(finding)) {
      const link = el("a", "value-chip", value);
      link.href = `#${anchorId(item.item_id, finding.code, value)}`;
      values.append(link);
    }
    entry.append(values);

    entry.append(el("p", "evidence", finding.evidence));
    if (finding.hint) entry.append(el("p", "hint", finding.hint));
    list.append(entry);
  }
  section.append(list);
  return section;
}

// Wrap occurrences of the findings' quoted values in <mark> targets so
// the finding chips above can jump to them.
export function highlightedResponse(
  item: ReviewItemView,
  response: string,
): DocumentFragment {
  const targets = new Map<string, string>(); // value -> anchor id
  for (const finding of item.findings) {
    for (const value of evidenceValues(finding)) {
      if (!targets.has(value)) {
        targets.set(value, anchorId(item.item_id, finding.code, value));
      }
    }
  }
  const fragment = document.createDocumentFragment();
  if (targets.size === 0) {
    fragment.append(response);
    return fragment;
  }
  const escaped = [...targets.keys()]
    .sort((a, b) => b.length - a.length)
    .map((v) => v.replace(/[.*+?^${}()|[\]\\]/g, "\\$&"));
  const splitter = new RegExp(`(${escaped.join("|")})`, "g");
  const placed = new Set<string>();
  for (const piece of response.split(splitter)) {
    const target = targets.get(piece);
    if (target !== undefined) {
      const mark = el("mark", "value-mark", piece);
      if (!placed.has(target)) {
        mark.id = target; // anchor on the first occurrence only
        placed.add(target);
      }
      fragment.append(mark);
    } else if (piece !== "") {
      fragment.append(piece);
    }
  }
  return fragment;
}

function transcriptSection(
  item: ReviewItemView,
  entries: TranscriptEntryView[],
): HTMLElement {
  const section = el("section", "transcript");
  section.append(el("h3", undefined, `Transcript (${entries.length})`));
  for (const entry of entries) {
    const exchange = el("div", "exchange");
    exchange.append(el("p", "prompt", entry.prompt));
    const response = el("p", "response");
    response.append(highlightedResponse(item, entry.response));
    exchange.append(response);
    section.append(exchange);
  }
  return section;
}

function historySection(corrections: CorrectionView[]): HTMLElement {
  const section = el("section", "history");
  section.append(el("h3", undefined, `Corrections (${corrections.length})`));
  const thread = el("ol", "correction-thread");
  for (const correction of corrections) {
    const entry = el("li", "correction");
    entry.append(el("span", "timestamp", correction.timestamp));
    entry.append(el("p", "note", correction.note));
    entry.append(el("span", "response-ref", correction.response_ref));
    thread.append(entry);
  }
  section.append(thread);
  return section;
}

function correctionComposer(
  item: ReviewItemView,
  state: ConsoleState,
  handlers: Handlers,
  busy: boolean,
): HTMLElement {
  const draft = draftFor(state, item.item_id);
  const form = el("form", "composer");
  form.append(el("h3", undefined, "Correction"));

  const note = el("textarea", "note-input");
  note.placeholder = "Describe what the model should recheck";
  note.value = draft.note;
  note.addEventListener("input", () =>
    handlers.onNoteDraft(item.item_id, note.value));

  const submit = el("button", "submit-correction", "Send correction");
  submit.type = "submit";
  submit.disabled = busy;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!busy && note.value.trim() !== "") {
      handlers.onSubmitCorrection(item.item_id, note.value);
    }
  });
  form.append(note, submit);
  return form;
}

function approveDialog(
  item: ReviewItemView,
  state: ConsoleState,
  handlers: Handlers,
  busy: boolean,
): HTMLElement {
  const draft = draftFor(state, item.item_id);
  const form = el("form", "approve");
  form.append(el("h3", undefined, "Approve"));

  const score = el("input", "score-input");
  score.type = "text";
  score.placeholder = `final score (blank keeps ${formatScore(item.model_score)})`;
  score.value = draft.scoreText;

  const problem = el("p", "score-problem");
  const submit = el("button", "submit-approve", "Approve");
  submit.type = "submit";

  const gate = () => {
    const parsed = parseScoreDraft(score.value);
    problem.textContent = parsed.ok ? "" : parsed.reason;
    submit.disabled = busy || !parsed.ok;
  };
  score.addEventListener("input", () => {
    handlers.onScoreDraft(item.item_id, score.value);
    gate();
  });
  gate();

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const parsed = parseScoreDraft(score.value);
    if (!busy && parsed.ok) handlers.onApprove(item.item_id, parsed.value);
  });
  form.append(score, problem, submit);
  return form;
}
