/**
 * Correctness grading for completions.
 *
 * Boxed grading extracts the content of the last `\boxed{...}` (balanced
 * braces) and compares it to the reference after whitespace trimming --
 * exact string equality only, no mathematical equivalence. Completions
 * without a box grade as incorrect. Externally supplied labels pass
 * through untouched.
 */

const BOX_MARKER = "\\boxed{";

/** Content of the last balanced `\boxed{...}`, or null when absent. */
export function lastBoxedContent(text: string): string | null {
  let searchFrom = text.length;
  while (true) {
    const start = text.lastIndexOf(BOX_MARKER, searchFrom);
    if (start < 0) return null;
    let depth = 1;
    let i = start + BOX_MARKER.length;
    for (; i < text.length && depth > 0; i++) {
      if (text[i] === "{") depth++;
      else if (text[i] === "}") depth--;
    }
    if (depth === 0) {
      return text.slice(start + BOX_MARKER.length, i - 1);
    }
    // Unbalanced trailing box (e.g. generation cut off): try an earlier one.
    searchFrom = start - 1;
    if (searchFrom < 0) return null;
  }
}

/** 1 iff the last boxed content, whitespace-trimmed, equals the reference. */
export function gradeBoxed(completion: string, reference: string): 0 | 1 {
  const boxed = lastBoxedContent(completion);
  if (boxed === null) return 0;
  return boxed.trim() === reference.trim() ? 1 : 0;
}
