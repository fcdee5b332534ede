/**
 * Review-panel state: the expert works doubtful-first, so items sort by
 * ascending confidence and anything under the flag threshold is marked.
 */

export type ReviewStatus = "auto" | "corrected" | "confirmed";

export interface ReviewItem {
  glyphId: string;
  code: string;
  confidence: number;
  runnerUp: [string, number] | null;
  status: ReviewStatus;
  bbox: [number, number, number, number];
}

export interface ReviewEntry {
  item: ReviewItem;
  flagged: boolean;
}

export function renderReview(items: ReviewItem[], threshold: number): ReviewEntry[] {
  // Array.prototype.sort is stable: equal confidences keep original order
  return items
    .map((item) => ({ item, flagged: item.confidence < threshold }))
    .sort((a, b) => a.item.confidence - b.item.confidence);
}
