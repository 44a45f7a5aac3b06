/**
 * Trace extraction: sample reasoning paths from a causal model, capture
 * per-generated-token features, grade, and write a trace dataset.
 *
 * Capture convention: each generated token's feature row comes from the
 * forward pass that emitted it (post-residual hidden state of every layer
 * including the embedding, so num_layers = transformer layers + 1) or, in
 * logits mode, that pass's pre-softmax logit vector. Prompt positions are
 * never captured, so num_tokens always equals the generated-token count.
 * The convention is recorded in the dataset's provenance file.
 */

import { writeFileSync } from "node:fs";
import { join } from "node:path";

import { gradeBoxed } from "./grading.js";
import { Rng } from "./rng.js";
import { sampleToken } from "./sampling.js";
import { renderPrompt } from "./templates.js";
import { TinyCausalModel } from "./tinyModel.js";
import { writeTraceDataset, type DatasetMeta } from "./traceWriter.js";
import {
  ConfigurationError,
  type CausalModelBackend,
  type ExtractedPath,
  type GenSpec,
  type GradeRule,
  type QuestionRecord,
} from "./types.js";

/** FNV-1a over UTF-8, for deriving per-question sampling seeds. */
function hashString(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export function resolveBackend(modelId: string): CausalModelBackend {
  return new TinyCausalModel(modelId);
}

function concatRows(rows: Float32Array[]): Float32Array {
  const out = new Float32Array(rows.length * (rows[0]?.length ?? 0));
  rows.forEach((row, i) => out.set(row, i * row.length));
  return out;
}

/** Run one rollout; returns the captured rows and the decoded completion. */
function rollout(
  model: CausalModelBackend,
  spec: GenSpec,
  promptTokens: number[],
  rng: Rng,
): { features: Float32Array[]; generated: number[] } {
  model.reset();
  for (let i = 0; i < promptTokens.length - 1; i++) {
    model.step(promptTokens[i]);
  }
  let current = promptTokens[promptTokens.length - 1];
  const features: Float32Array[] = [];
  const generated: number[] = [];
  for (let t = 0; t < spec.maxNewTokens; t++) {
    const { logits, hiddenStates } = model.step(current);
    const next = sampleToken(logits, { temperature: spec.temperature, topP: spec.topP }, rng);
    if (spec.mode === "hidden") {
      features.push(concatRows(hiddenStates as Float32Array[]));
    } else {
      features.push(Float32Array.from(logits));
    }
    generated.push(next);
    if (next === model.eosToken) break;
    current = next;
  }
  return { features, generated };
}

function labelFor(
  rule: GradeRule,
  questionId: string,
  rolloutIndex: number,
  completion: string,
  reference: string,
): number {
  if (rule.kind === "boxed_exact") {
    return gradeBoxed(completion, reference);
  }
  const labels = rule.labels[questionId];
  if (labels === undefined || labels[rolloutIndex] === undefined) {
    throw new ConfigurationError(
      `external labels missing for ${questionId} rollout ${rolloutIndex}`,
    );
  }
  const label = labels[rolloutIndex];
  if (label !== 0 && label !== 1) {
    throw new ConfigurationError(`external label for ${questionId}[${rolloutIndex}] must be 0 or 1`);
  }
  return label;
}

export interface ExtractionResult {
  directory: string;
  meta: DatasetMeta;
  paths: ExtractedPath[];
}

/**
 * Generate rollouts for every question and write a trace dataset directory
 * (plus a provenance record). Questions are processed in sorted question-id
 * order so the manifest layout is deterministic.
 */
export function extractTraces(
  questions: QuestionRecord[],
  spec: GenSpec,
  gradeRule: GradeRule,
  outDir: string,
): ExtractionResult {
  if (questions.length === 0) {
    throw new ConfigurationError("no questions to extract");
  }
  const model = resolveBackend(spec.modelId);
  if (spec.mode === "hidden" && !model.hiddenStatesAvailable) {
    throw new ConfigurationError(
      `model ${spec.modelId} does not expose hidden states; rerun with mode=logits`,
    );
  }
  const meta: DatasetMeta =
    spec.mode === "hidden"
      ? { mode: "hidden", numLayers: model.numLayers + 1, perLayerDim: model.hiddenDim }
      : { mode: "logits", numLayers: 1, perLayerDim: model.vocabSize };

  const ordered = [...questions].sort((a, b) => (a.questionId < b.questionId ? -1 : 1));
  const paths: ExtractedPath[] = [];
  for (const question of ordered) {
    const promptTokens = model.encode(renderPrompt(spec.templateId, question.prompt));
    for (let r = 0; r < spec.rolloutsPerQuestion; r++) {
      const rng = new Rng(spec.seed, hashString(question.questionId), r);
      const { features, generated } = rollout(model, spec, promptTokens, rng);
      const completion = model.decode(generated);
      paths.push({
        questionId: question.questionId,
        pathId: `${question.questionId}-r${r}`,
        label: labelFor(gradeRule, question.questionId, r, completion, question.reference),
        numTokens: features.length,
        completion,
        features,
      });
    }
  }

  writeTraceDataset(outDir, meta, paths);
  const provenance = {
    extractor: "elhsr-extractor",
    model_id: spec.modelId,
    capture_convention:
      spec.mode === "hidden"
        ? "post-residual hidden states at the emitting position, embedding layer first, generated tokens only"
        : "pre-softmax logits at the emitting position, generated tokens only",
    gen_spec: {
      model: spec.modelId,
      mode: spec.mode,
      temperature: spec.temperature,
      top_p: spec.topP,
      max_new_tokens: spec.maxNewTokens,
      rollouts_per_question: spec.rolloutsPerQuestion,
      template: spec.templateId,
      seed: spec.seed,
    },
    grading: gradeRule.kind,
  };
  writeFileSync(join(outDir, "provenance.json"), JSON.stringify(provenance, null, 2) + "\n");
  return { directory: outDir, meta, paths };
}
