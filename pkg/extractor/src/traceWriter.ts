/**
 * Writer for version-1 trace dataset directories.
 *
 * Layout (consumed by the `elhsr` toolkit through its documented format):
 *   meta.json   - format_version, mode, num_layers, per_layer_dim,
 *                 dtype "f32le", layer_order "embedding_first"
 *   paths.jsonl - question_id, path_id, label, num_tokens, offset_bytes;
 *                 offsets contiguous, one question's records adjacent
 *   hidden.bin  - concatenated [T x D] rows, little-endian float32
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { join } from "node:path";

export interface DatasetMeta {
  mode: "hidden" | "logits";
  numLayers: number;
  perLayerDim: number;
}

export interface PathEntry {
  questionId: string;
  pathId: string;
  label: number;
  /** One row per token, each of width numLayers * perLayerDim. */
  features: Float32Array[];
}

const BYTES_PER_VALUE = 4;

export function writeTraceDataset(directory: string, meta: DatasetMeta, paths: PathEntry[]): void {
  const width = meta.numLayers * meta.perLayerDim;
  mkdirSync(directory, { recursive: true });

  const manifestLines: string[] = [];
  const blocks: Buffer[] = [];
  let offset = 0;
  let lastQuestion: string | null = null;
  const closedQuestions = new Set<string>();

  for (const path of paths) {
    if (path.questionId !== lastQuestion) {
      if (closedQuestions.has(path.questionId)) {
        throw new Error(`records for question ${path.questionId} are not contiguous`);
      }
      if (lastQuestion !== null) closedQuestions.add(lastQuestion);
      lastQuestion = path.questionId;
    }
    if (path.features.length < 1) {
      throw new Error(`path ${path.pathId} has no token rows`);
    }
    if (path.label !== 0 && path.label !== 1) {
      throw new Error(`path ${path.pathId} label must be 0 or 1`);
    }
    const block = Buffer.alloc(path.features.length * width * BYTES_PER_VALUE);
    let cursor = 0;
    for (const row of path.features) {
      if (row.length !== width) {
        throw new Error(
          `path ${path.pathId}: row width ${row.length} does not match ${width}`,
        );
      }
      for (const value of row) {
        if (!Number.isFinite(value)) {
          throw new Error(`path ${path.pathId} contains a non-finite feature`);
        }
        block.writeFloatLE(value, cursor);
        cursor += BYTES_PER_VALUE;
      }
    }
    manifestLines.push(
      JSON.stringify({
        question_id: path.questionId,
        path_id: path.pathId,
        label: path.label,
        num_tokens: path.features.length,
        offset_bytes: offset,
      }),
    );
    blocks.push(block);
    offset += block.length;
  }

  const metaJson = {
    format_version: 1,
    mode: meta.mode,
    num_layers: meta.numLayers,
    per_layer_dim: meta.perLayerDim,
    dtype: "f32le",
    layer_order: "embedding_first",
  };
  writeFileSync(join(directory, "meta.json"), JSON.stringify(metaJson, null, 2) + "\n");
  writeFileSync(join(directory, "paths.jsonl"), manifestLines.map((l) => l + "\n").join(""));
  writeFileSync(join(directory, "hidden.bin"), Buffer.concat(blocks));
}
