/** Split post text into plain and highlighted segments. Pure. */

import type { Feature, Highlight } from "./types.js";

export interface Segment {
  text: string;
  /** Present when this run of text is a clickable highlight. */
  highlight?: Highlight;
}

/**
 * Lay spanned highlights over the text, in order, with plain gaps between.
 * Concatenating segment texts always reproduces the input exactly; spans
 * that overlap a previous one or fall outside the text are dropped rather
 * than corrupting the reconstruction.
 */
export function segmentText(text: string, highlights: Highlight[]): Segment[] {
  const spanned = highlights
    .filter((h): h is Highlight & { span: [number, number] } => h.span !== null)
    .sort((a, b) => a.span[0] - b.span[0]);

  const segments: Segment[] = [];
  let position = 0;
  for (const highlight of spanned) {
    const [start, end] = highlight.span;
    if (start < position || end > text.length || start >= end) continue;
    if (start > position) segments.push({ text: text.slice(position, start) });
    segments.push({ text: text.slice(start, end), highlight });
    position = end;
  }
  if (position < text.length) segments.push({ text: text.slice(position) });
  return segments;
}

/** The post's author feature, when the service offered one (null span). */
export function authorHighlight(highlights: Highlight[]): Feature | null {
  const hit = highlights.find((h) => h.span === null && h.feature.kind === "author");
  return hit ? hit.feature : null;
}
