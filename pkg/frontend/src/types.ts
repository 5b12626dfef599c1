export type Variant = "info_only" | "three_aspects";

export const VARIANT_SCALES: Record<Variant, readonly string[]> = {
  info_only: ["cig"],
  three_aspects: ["novelty", "relevance", "implication_scope"],
};

export const LOCK_SECONDS = 60;

export interface WindowTurn {
  index: number;
  speaker: string;
  stance: string | null;
  text: string;
}

export interface TargetUtterance {
  index: number;
  speaker: string;
  stance: string | null;
  text: string;
}

/** lemma -> word positions (0-based token index) in the prior summary */
export type OverlapMap = Record<string, number[]>;

export interface AnnotationTask {
  task_id: string;
  session_id: string;
  variant: Variant;
  topic: string;
  prior_summary: string;
  short_window: WindowTurn[];
  targets: TargetUtterance[];
  keyword_overlap: Record<string, OverlapMap>;
  served_at: number;
  segment_pos: number;
  segment_count: number;
}

export interface RatingRow {
  utterance_index: number;
  scores: Record<string, number>;
}

export interface AcceptedRating {
  utterance_index: number;
  version: number;
}

export interface SubmitResponse {
  accepted: AcceptedRating[];
  task_complete: boolean;
}

export interface ServiceRejection {
  code: string;
  detail: string;
}
