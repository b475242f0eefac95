import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { createConsole } from "../src/main.js";
import { evidenceValues } from "../src/render.js";
import {
  formatScore,
  groupBySeverity,
  parseScoreDraft,
  worstSeverity,
} from "../src/state.js";
import type {
  FindingView,
  ReviewItemView,
  TranscriptEntryView,
} from "../src/types.js";

const BASE = "http://service.test";

// ------------------------------------------------------------ fake service
// In-memory stand-in for the review service, speaking the same routes and
// payload shapes. Tests mutate it directly to play the role of a second
// reviewer.

interface ServerItem {
  item_id: string;
  cycle_id: string;
  firm: string;
  provider: string;
  strategy: string;
  status: "pending" | "corrected" | "approved";
  model_score: number;
  final_score: number | null;
  findings: FindingView[];
  transcript: TranscriptEntryView[];
}

function seededItems(): ServerItem[] {
  return [
    {
      item_id: "t-aena-04",
      cycle_id: "2025-04",
      firm: "AENA",
      provider: "chatgpt",
      strategy: "structured",
      status: "pending",
      model_score: 0.71,
      final_score: null,
      findings: [
        {
          code: "C1",
          severity: "error",
          evidence: "composite reported 0.71 but weighted categories give 0.560000",
          hint: "recompute the weighted mean of the category scores",
        },
      ],
      transcript: [
        {
          prompt: "Score AENA on the category framework for 2025-04.",
          response:
            "Valuation looks stretched but traffic momentum is strong; composite attractiveness 0.71 on balance.",
          timestamp: "2025-04-30T09:12:00",
          attachments: [],
          retries: 0,
        },
      ],
    },
    {
      item_id: "t-tef-04",
      cycle_id: "2025-04",
      firm: "TEF",
      provider: "chatgpt",
      strategy: "structured",
      status: "pending",
      model_score: 0.58,
      final_score: null,
      findings: [
        {
          code: "D5",
          severity: "warning",
          evidence: "answer states 0.58 then revises to 0.55 without new inputs",
          hint: "ask which figure stands",
        },
      ],
      transcript: [
        {
          prompt: "Score TEF on the category framework for 2025-04.",
          response:
            "Attractiveness 0.58. On reflection the leverage profile argues for 0.55 instead.",
          timestamp: "2025-04-30T09:13:00",
          attachments: [],
          retries: 0,
        },
      ],
    },
    {
      item_id: "t-itx-04",
      cycle_id: "2025-04",
      firm: "ITX",
      provider: "chatgpt",
      strategy: "structured",
      status: "pending",
      model_score: 0.64,
      final_score: null,
      findings: [],
      transcript: [
        {
          prompt: "Score ITX on the category framework for 2025-04.",
          response: "Steady retail execution; attractiveness 0.64.",
          timestamp: "2025-04-30T09:14:00",
          attachments: [],
          retries: 0,
        },
      ],
    },
  ];
}

function payload(item: ServerItem): ReviewItemView {
  const { transcript, ...rest } = item;
  void transcript;
  return { ...rest, findings: [...item.findings] };
}

class FakeService {
  items = new Map<string, ServerItem>();
  requests: string[] = [];
  down = false;
  private hold: Promise<void> | null = null;
  private exchanges = 0;

  constructor(items: ServerItem[]) {
    for (const item of items) this.items.set(item.item_id, item);
  }

  // Park every request behind a promise until the returned release runs;
  // lets a test look at the page while a mutation is in flight.
  holdRequests(): () => void {
    let release!: () => void;
    this.hold = new Promise<void>((resolve) => (release = resolve));
    return () => {
      this.hold = null;
      release();
    };
  }

  install(): void {
    const impl = async (url: string, init?: RequestInit): Promise<Response> => {
      const method = init?.method ?? "GET";
      const path = new URL(url).pathname;
      this.requests.push(`${method} ${path}`);
      if (this.down) throw new TypeError("fetch failed");
      if (this.hold) await this.hold;
      const body =
        typeof init?.body === "string" ? (JSON.parse(init.body) as Record<string, unknown>) : {};
      const { status, data } = this.route(method, path, body);
      const shim = {
        ok: status >= 200 && status < 300,
        status,
        json: async () => data,
      };
      return shim as unknown as Response;
    };
    vi.stubGlobal("fetch", impl as unknown as typeof fetch);
  }

  private route(
    method: string,
    path: string,
    body: Record<string, unknown>,
  ): { status: number; data: unknown } {
    const queue = path.match(/^\/cycles\/([^/]+)\/items$/);
    if (method === "GET" && queue) {
      const cycle = decodeURIComponent(queue[1]!);
      if (cycle === "1999-01") {
        return { status: 404, data: { error: `no cycle ${cycle} on the review ledger` } };
      }
      const members = [...this.items.values()].filter((i) => i.cycle_id === cycle);
      return {
        status: 200,
        data: { cycle_id: cycle, items: members.map(payload) },
      };
    }

    const itemPath = path.match(/^\/items\/([^/]+)(?:\/(transcript|corrections|approve))?$/);
    if (!itemPath) return { status: 404, data: { error: `no route ${path}` } };
    const item = this.items.get(decodeURIComponent(itemPath[1]!));
    if (!item) return { status: 404, data: { error: `no item ${itemPath[1]}` } };
    const tail = itemPath[2];

    if (method === "GET" && tail === undefined) {
      return { status: 200, data: payload(item) };
    }
    if (method === "GET" && tail === "transcript") {
      return {
        status: 200,
        data: { item_id: item.item_id, transcript: [...item.transcript] },
      };
    }
    if (method === "POST" && tail === "corrections") {
      if (typeof body.note !== "string") {
        return { status: 400, data: { error: "request body must carry a string field 'note'" } };
      }
      if (item.status === "approved") {
        return { status: 409, data: { error: `item ${item.item_id} is already approved` } };
      }
      item.status = "corrected";
      const seq = ++this.exchanges;
      const prompt = `A reviewer flagged the previous answer: ${body.note}`;
      const response = "Rechecked as asked; the revised view follows.";
      item.transcript.push({
        prompt,
        response,
        timestamp: `2025-04-30T10:0${seq}:00`,
        attachments: [],
        retries: 0,
      });
      return {
        status: 200,
        data: {
          item_id: item.item_id,
          note: body.note,
          prompt,
          response_ref: `exchange-${seq}`,
          timestamp: `2025-04-30T10:0${seq}:00`,
          item: payload(item),
        },
      };
    }
    if (method === "POST" && tail === "approve") {
      if (item.status === "approved") {
        return { status: 409, data: { error: `item ${item.item_id} is already approved` } };
      }
      const score = body.final_score;
      if (score !== undefined && (typeof score !== "number" || score < 0 || score > 1)) {
        return { status: 400, data: { error: "final score must lie between 0 and 1" } };
      }
      item.status = "approved";
      item.final_score = typeof score === "number" ? score : item.model_score;
      return { status: 200, data: payload(item) };
    }
    return { status: 404, data: { error: `no route ${method} ${path}` } };
  }
}

// ---------------------------------------------------------------- helpers

function mountDom(): HTMLElement {
  document.body.innerHTML = `
    <main id="console-root">
      <section class="queue-pane"></section>
      <section class="detail-pane"></section>
    </main>`;
  return document.getElementById("console-root")!;
}

function q<T extends Element>(selector: string): T {
  const node = document.querySelector<T>(selector);
  if (!node) throw new Error(`nothing matches ${selector}`);
  return node;
}

function qa(selector: string): Element[] {
  return [...document.querySelectorAll(selector)];
}

function textOf(selector: string): string {
  return q(selector).textContent ?? "";
}

function rowFor(firm: string): HTMLElement | undefined {
  return [...document.querySelectorAll<HTMLElement>(".item-row")].find(
    (row) => row.querySelector(".firm")?.textContent === firm,
  );
}

function setValue(selector: string, value: string): void {
  const field = q<HTMLInputElement | HTMLTextAreaElement>(selector);
  field.value = value;
  field.dispatchEvent(new Event("input", { bubbles: true }));
}

function submitForm(selector: string): void {
  q<HTMLFormElement>(selector).dispatchEvent(
    new Event("submit", { bubbles: true, cancelable: true }),
  );
}

async function openItem(firm: string): Promise<void> {
  rowFor(firm)!.click();
  await vi.waitFor(() => {
    expect(qa(".exchange").length).toBeGreaterThan(0);
  });
}

// ------------------------------------------------------------ unit checks

describe("parseScoreDraft", () => {
  it("treats blank input as accepting the model score", () => {
    expect(parseScoreDraft("")).toEqual({ ok: true, value: null });
    expect(parseScoreDraft("   ")).toEqual({ ok: true, value: null });
  });

  it("accepts decimals inside the unit interval", () => {
    expect(parseScoreDraft("0.62")).toEqual({ ok: true, value: 0.62 });
    expect(parseScoreDraft("1")).toEqual({ ok: true, value: 1 });
    expect(parseScoreDraft(".5")).toEqual({ ok: true, value: 0.5 });
  });

  it("rejects values outside the interval and non-numbers", () => {
    expect(parseScoreDraft("1.3")).toEqual({
      ok: false,
      reason: "score must be between 0 and 1",
    });
    expect(parseScoreDraft("-0.1")).toEqual({
      ok: false,
      reason: "score must be between 0 and 1",
    });
    expect(parseScoreDraft("abc")).toEqual({
      ok: false,
      reason: "score must be a number",
    });
    expect(parseScoreDraft("0.5.1").ok).toBe(false);
  });
});

describe("severity grouping", () => {
  const mk = (findings: FindingView[]): ReviewItemView => ({
    item_id: "x",
    cycle_id: "2025-04",
    firm: "X",
    provider: "chatgpt",
    strategy: "structured",
    status: "pending",
    model_score: 0.5,
    final_score: null,
    findings,
  });

  it("ranks an item by its worst finding", () => {
    expect(worstSeverity(mk([]))).toBe("clean");
    expect(worstSeverity(mk([{ code: "D5", severity: "warning", evidence: "", hint: "" }]))).toBe(
      "warning",
    );
    expect(
      worstSeverity(
        mk([
          { code: "D5", severity: "warning", evidence: "", hint: "" },
          { code: "C1", severity: "error", evidence: "", hint: "" },
        ]),
      ),
    ).toBe("error");
  });

  it("splits a queue into the three buckets", () => {
    const clean = mk([]);
    const warned = mk([{ code: "D5", severity: "warning", evidence: "", hint: "" }]);
    const groups = groupBySeverity([clean, warned]);
    expect(groups.clean).toEqual([clean]);
    expect(groups.warning).toEqual([warned]);
    expect(groups.error).toEqual([]);
  });
});

describe("evidence values", () => {
  it("pulls quoted figures out verbatim", () => {
    expect(
      evidenceValues({
        code: "C1",
        severity: "error",
        evidence: "composite reported 0.71 but weighted categories give 0.560000",
        hint: "",
      }),
    ).toEqual(["0.71", "0.560000"]);
  });

  it("yields nothing when the evidence has no figures", () => {
    expect(
      evidenceValues({ code: "A3", severity: "warning", evidence: "periods differ", hint: "" }),
    ).toEqual([]);
  });
});

describe("formatScore", () => {
  it("renders four decimals and a placeholder for missing", () => {
    expect(formatScore(0.56)).toBe("0.5600");
    expect(formatScore(null)).toBe("-");
  });
});

// --------------------------------------------------------- console round trip

describe("review console", () => {
  let service: FakeService;
  let app: ReturnType<typeof createConsole>;

  beforeEach(() => {
    service = new FakeService(seededItems());
    service.install();
    app = createConsole(mountDom(), BASE);
  });

  afterEach(() => {
    vi.unstubAllGlobals();
  });

  it("renders the seeded queue grouped by severity", async () => {
    await app.loadCycle("2025-04");

    expect(textOf(".queue-heading")).toBe("Review queue 2025-04");
    expect(qa(".group-heading").map((h) => h.textContent)).toEqual([
      "errors (1)",
      "warnings (1)",
      "clean (1)",
    ]);

    const aena = rowFor("AENA")!;
    expect(aena.querySelector(".badge")!.textContent).toBe("error");
    expect(aena.querySelector(".finding-count")!.textContent).toBe("1 finding");
    expect(aena.querySelector(".score")!.textContent).toBe("0.7100");

    const itx = rowFor("ITX")!;
    expect(itx.querySelector(".badge")!.textContent).toBe("clean");
    expect(itx.querySelector(".finding-count")!.textContent).toBe("0 findings");
  });

  it("states plainly when nothing is pending", async () => {
    await app.loadCycle("2025-06");
    expect(textOf(".empty-queue")).toBe("no pending reviews");
  });

  it("shows a dead service as a banner and retries only when asked", async () => {
    service.down = true;
    await app.loadCycle("2025-04");

    expect(textOf(".banner-error")).toContain("review service is unreachable");
    expect(service.requests).toHaveLength(1);

    service.down = false;
    q<HTMLButtonElement>(".banner-error .retry").click();
    await vi.waitFor(() => {
      expect(rowFor("AENA")).toBeDefined();
    });
    expect(service.requests.filter((r) => r.includes("/cycles/"))).toHaveLength(2);
  });

  it("relays the server's message for an unknown cycle", async () => {
    await app.loadCycle("1999-01");
    expect(textOf(".banner-error")).toContain("no cycle 1999-01");
  });

  it("anchors findings to highlighted transcript values", async () => {
    await app.loadCycle("2025-04");
    await openItem("AENA");

    expect(textOf(".meta-model-score")).toBe("0.7100");
    expect(textOf(".meta-final-score")).toBe("-");

    // reported and recomputed figures sit side by side as chips
    const chips = qa(".finding-values .value-chip");
    expect(chips.map((c) => c.textContent)).toEqual(["0.71", "0.560000"]);
    expect(textOf(".evidence")).toBe(
      "composite reported 0.71 but weighted categories give 0.560000",
    );

    // the reported figure is marked in the transcript and the chip points at it
    const marks = qa("mark.value-mark");
    expect(marks.map((m) => m.textContent)).toContain("0.71");
    const marked = marks.find((m) => m.textContent === "0.71") as HTMLElement;
    expect(marked.id).not.toBe("");
    expect(chips[0]!.getAttribute("href")).toBe(`#${marked.id}`);
  });

  it("marks both figures of a self-revision", async () => {
    await app.loadCycle("2025-04");
    await openItem("TEF");

    const marks = qa("mark.value-mark").map((m) => m.textContent);
    expect(marks).toContain("0.58");
    expect(marks).toContain("0.55");
  });

  it("appends corrections to the item's history", async () => {
    await app.loadCycle("2025-04");
    await openItem("AENA");
    expect(textOf(".history h3")).toBe("Corrections (0)");

    setValue(".note-input", "recheck the composite arithmetic");
    submitForm(".composer");
    await vi.waitFor(() => {
      expect(qa(".correction")).toHaveLength(1);
    });
    expect(textOf(".correction .note")).toBe("recheck the composite arithmetic");
    expect(rowFor("AENA")!.querySelector(".status")!.textContent).toBe("corrected");
    expect(service.items.get("t-aena-04")!.status).toBe("corrected");

    setValue(".note-input", "weights look right now");
    submitForm(".composer");
    await vi.waitFor(() => {
      expect(qa(".correction")).toHaveLength(2);
    });
    const notes = qa(".correction .note").map((n) => n.textContent);
    expect(notes).toEqual(["recheck the composite arithmetic", "weights look right now"]);
    expect(textOf(".history h3")).toBe("Corrections (2)");
    expect(
      service.requests.filter((r) => r === "POST /items/t-aena-04/corrections"),
    ).toHaveLength(2);
  });

  it("disables the composer while a correction is in flight", async () => {
    await app.loadCycle("2025-04");
    await openItem("AENA");

    const release = service.holdRequests();
    setValue(".note-input", "hold this");
    submitForm(".composer");

    expect(q<HTMLButtonElement>(".submit-correction").disabled).toBe(true);
    release();
    await vi.waitFor(() => {
      expect(qa(".correction")).toHaveLength(1);
    });
    expect(q<HTMLButtonElement>(".submit-correction").disabled).toBe(false);
  });

  it("approves with a typed score, optimistically and then confirmed", async () => {
    await app.loadCycle("2025-04");
    await openItem("AENA");

    const release = service.holdRequests();
    setValue(".score-input", "0.62");
    submitForm(".approve");

    // optimistic: the page already shows the approval while the request
    // is parked, and the item has left the pending queue
    expect(textOf(".meta-status")).toBe("approved");
    expect(textOf(".meta-final-score")).toBe("0.6200");
    expect(rowFor("AENA")).toBeUndefined();
    expect(service.items.get("t-aena-04")!.status).toBe("pending");

    release();
    await vi.waitFor(() => {
      expect(service.items.get("t-aena-04")!.status).toBe("approved");
    });
    expect(service.items.get("t-aena-04")!.final_score).toBe(0.62);
    expect(textOf(".meta-final-score")).toBe("0.6200");
    expect(app.state.busy.size).toBe(0);
    expect(qa(".composer")).toHaveLength(0);
  });

  it("approves at the model score when the field is left blank", async () => {
    await app.loadCycle("2025-04");
    await openItem("TEF");

    submitForm(".approve");
    await vi.waitFor(() => {
      expect(service.items.get("t-tef-04")!.status).toBe("approved");
    });
    expect(service.items.get("t-tef-04")!.final_score).toBe(0.58);
    expect(textOf(".meta-final-score")).toBe("0.5800");
  });

  it("blocks an out-of-range score before any request is made", async () => {
    await app.loadCycle("2025-04");
    await openItem("ITX");

    setValue(".score-input", "1.3");
    expect(textOf(".score-problem")).toBe("score must be between 0 and 1");
    expect(q<HTMLButtonElement>(".submit-approve").disabled).toBe(true);

    submitForm(".approve");
    expect(service.requests.filter((r) => r.endsWith("/approve"))).toHaveLength(0);

    setValue(".score-input", "abc");
    expect(textOf(".score-problem")).toBe("score must be a number");

    setValue(".score-input", "0.9");
    expect(textOf(".score-problem")).toBe("");
    expect(q<HTMLButtonElement>(".submit-approve").disabled).toBe(false);
  });

  it("surfaces a stale approval as a conflict and recovers on refresh", async () => {
    await app.loadCycle("2025-04");
    await openItem("AENA");

    // a second reviewer approves the same item behind this page's back
    const server = service.items.get("t-aena-04")!;
    server.status = "approved";
    server.final_score = 0.5;

    setValue(".score-input", "0.62");
    submitForm(".approve");
    await vi.waitFor(() => {
      expect(qa(".banner-conflict")).toHaveLength(1);
    });
    expect(textOf(".banner-conflict")).toContain("already approved");
    expect(textOf(".banner-conflict")).toContain("refresh to continue");

    // the optimistic change was rolled back to the stale snapshot
    expect(textOf(".meta-status")).toBe("pending");
    expect(rowFor("AENA")).toBeDefined();

    q<HTMLButtonElement>(".banner-conflict .refresh").click();
    await vi.waitFor(() => {
      expect(qa(".banner-conflict")).toHaveLength(0);
    });
    expect(textOf(".meta-status")).toBe("approved");
    expect(textOf(".meta-final-score")).toBe("0.5000");
    expect(rowFor("AENA")).toBeUndefined();
  });
});
