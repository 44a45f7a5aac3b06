/** Shared configuration and backend types. */

export type CaptureMode = "hidden" | "logits";

/** Generation settings; defaults mirror the reference protocol. */
export interface GenSpec {
  modelId: string;
  mode: CaptureMode;
  temperature: number;
  topP: number;
  maxNewTokens: number;
  rolloutsPerQuestion: number;
  templateId: TemplateId;
  seed: number;
}

export const GEN_SPEC_DEFAULTS = {
  mode: "hidden" as CaptureMode,
  temperature: 1.0,
  topP: 0.9,
  maxNewTokens: 1024,
  rolloutsPerQuestion: 8,
  templateId: "math" as const,
  seed: 0,
};

export type TemplateId = "math" | "multiple_choice" | "code_output";

export interface QuestionRecord {
  questionId: string;
  prompt: string;
  /** Reference answer used by boxed grading; may be empty for external labels. */
  reference: string;
}

/** How path correctness labels are produced. */
export type GradeRule =
  | { kind: "boxed_exact" }
  | { kind: "external_labels"; labels: Record<string, number[]> };

/**
 * A causal language model the extractor can drive.
 *
 * `step` consumes one input token and returns the next-token logits plus,
 * when the backend exposes them, the post-residual hidden state of every
 * layer at this position, embedding first (layers + 1 vectors).
 */
export interface CausalModelBackend {
  readonly modelId: string;
  readonly vocabSize: number;
  readonly hiddenDim: number;
  /** Transformer layers; hidden captures carry layers + 1 vectors. */
  readonly numLayers: number;
  readonly eosToken: number;
  readonly hiddenStatesAvailable: boolean;
  reset(): void;
  step(token: number): { logits: Float32Array; hiddenStates: Float32Array[] | null };
  encode(text: string): number[];
  decode(tokens: number[]): string;
}

export interface ExtractedPath {
  questionId: string;
  pathId: string;
  label: number;
  numTokens: number;
  completion: string;
  /** One row per generated token; width depends on the capture mode. */
  features: Float32Array[];
}

export class ConfigurationError extends Error {}
