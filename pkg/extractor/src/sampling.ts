/** Temperature + nucleus (top-p) sampling over next-token logits. */

import type { Rng } from "./rng.js";

export interface SampleSettings {
  temperature: number;
  topP: number;
}

/** Softmax with max-shift; returns probabilities summing to 1. */
export function softmax(logits: Float32Array | Float64Array): Float64Array {
  let max = -Infinity;
  for (const value of logits) if (value > max) max = value;
  const out = new Float64Array(logits.length);
  let total = 0;
  for (let i = 0; i < logits.length; i++) {
    out[i] = Math.exp(logits[i] - max);
    total += out[i];
  }
  for (let i = 0; i < out.length; i++) out[i] /= total;
  return out;
}

/**
 * Sample one token id. Temperature scales logits first (0 means greedy);
 * with 0 < topP < 1 sampling is restricted to the smallest probability-
 * sorted prefix whose mass reaches topP, renormalized.
 */
export function sampleToken(logits: Float32Array, settings: SampleSettings, rng: Rng): number {
  const { temperature, topP } = settings;
  if (temperature < 0) throw new Error("temperature must be >= 0");
  if (temperature === 0) {
    let best = 0;
    for (let i = 1; i < logits.length; i++) if (logits[i] > logits[best]) best = i;
    return best;
  }
  const scaled = new Float64Array(logits.length);
  for (let i = 0; i < logits.length; i++) scaled[i] = logits[i] / temperature;
  const probabilities = softmax(scaled);

  let candidates: number[];
  if (topP > 0 && topP < 1) {
    candidates = nucleus(probabilities, topP);
  } else {
    candidates = Array.from(probabilities.keys());
  }
  let mass = 0;
  for (const index of candidates) mass += probabilities[index];
  const coin = rng.uniform() * mass;
  let cumulative = 0;
  for (const index of candidates) {
    cumulative += probabilities[index];
    if (coin < cumulative) return index;
  }
  return candidates[candidates.length - 1];
}

/** Indices of the smallest probability-sorted prefix with mass >= topP. */
export function nucleus(probabilities: Float64Array, topP: number): number[] {
  const order = Array.from(probabilities.keys()).sort(
    (a, b) => probabilities[b] - probabilities[a] || a - b,
  );
  const kept: number[] = [];
  let mass = 0;
  for (const index of order) {
    kept.push(index);
    mass += probabilities[index];
    if (mass >= topP) break;
  }
  return kept;
}
