import type {
  CorrectionView,
  QueueView,
  ReviewItemView,
  TranscriptView,
} from "./types.js";

// Base URL of the review service; empty means same origin.
let base = "";

export function configureApi(baseUrl: string): void {
  base = baseUrl.replace(/\/+$/, "");
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(`${base}${path}`, init);
  } catch {
    // status 0: never reached the service
    throw new ApiError(0, "review service is unreachable");
  }
  const data = await response.json().catch(() => null);
  if (!response.ok) {
    const message =
      data && typeof data.error === "string"
        ? data.error
        : `request failed with HTTP ${response.status}`;
    throw new ApiError(response.status, message);
  }
  return data as T;
}

export function fetchQueue(cycleId: string): Promise<QueueView> {
  return request(`/cycles/${encodeURIComponent(cycleId)}/items`);
}

export function fetchItem(itemId: string): Promise<ReviewItemView> {
  return request(`/items/${encodeURIComponent(itemId)}`);
}

export function fetchTranscript(itemId: string): Promise<TranscriptView> {
  return request(`/items/${encodeURIComponent(itemId)}/transcript`);
}

export function postCorrection(
  itemId: string,
  note: string,
): Promise<CorrectionView> {
  return request(`/items/${encodeURIComponent(itemId)}/corrections`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ note }),
  });
}

// Omitting the score asks the service to accept the model-reported one.
export function postApproval(
  itemId: string,
  finalScore: number | null,
): Promise<ReviewItemView> {
  return request(`/items/${encodeURIComponent(itemId)}/approve`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(finalScore === null ? {} : { final_score: finalScore }),
  });
}
