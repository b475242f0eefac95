// Server resource shapes, mirrored field for field from the review API.
// The client renders these values as delivered; it never recomputes them.

export type Severity = "error" | "warning";
export type ItemStatus = "pending" | "corrected" | "approved";

export interface FindingView {
  code: string;
  severity: Severity;
  evidence: string;
  hint: string;
}

export interface ReviewItemView {
  item_id: string;
  cycle_id: string;
  firm: string;
  provider: string;
  strategy: string;
  status: ItemStatus;
  model_score: number;
  final_score: number | null;
  findings: FindingView[];
}

export interface QueueView {
  cycle_id: string;
  items: ReviewItemView[];
}

export interface CorrectionView {
  item_id: string;
  note: string;
  prompt: string;
  response_ref: string;
  timestamp: string;
  item: ReviewItemView;
}

export interface TranscriptEntryView {
  prompt: string;
  response: string;
  timestamp: string;
  attachments: string[];
  retries: number;
}

export interface TranscriptView {
  item_id: string;
  transcript: TranscriptEntryView[];
}
