/**
 * A miniature randomly-initialized causal transformer.
 *
 * Small enough to run anywhere, real enough to exercise the full capture
 * pipeline: token + position embeddings, single-head causal attention with
 * a KV cache, a tanh MLP, residual connections, and a logit head. The
 * hidden state of every layer (post-residual, embedding first) is exposed
 * per position.
 *
 * Model ids look like `tiny-rand:layers=2,dim=16,vocab=100,seed=0`; add
 * `,nohidden` to simulate a backend that only exposes logits.
 */

import { Rng } from "./rng.js";
import { ConfigurationError, type CausalModelBackend } from "./types.js";

const MAX_POSITIONS = 4096;
const CHAR_BASE = 32;

interface TinyConfig {
  layers: number;
  dim: number;
  vocab: number;
  seed: number;
  nohidden: boolean;
}

export function parseModelId(modelId: string): TinyConfig {
  const match = modelId.match(/^tiny-rand:(.+)$/);
  if (!match) {
    throw new ConfigurationError(
      `unknown model id ${modelId}; expected tiny-rand:layers=..,dim=..,vocab=..,seed=..`,
    );
  }
  const config: TinyConfig = { layers: 2, dim: 16, vocab: 100, seed: 0, nohidden: false };
  for (const part of match[1].split(",")) {
    if (part === "nohidden") {
      config.nohidden = true;
      continue;
    }
    const [key, value] = part.split("=");
    const parsed = Number(value);
    if (!["layers", "dim", "vocab", "seed"].includes(key) || !Number.isInteger(parsed) || parsed < 0) {
      throw new ConfigurationError(`bad model id component ${part}`);
    }
    (config as unknown as Record<string, number>)[key] = parsed;
  }
  if (config.layers < 1 || config.dim < 1 || config.vocab < 2) {
    throw new ConfigurationError(`degenerate model config in ${modelId}`);
  }
  return config;
}

function randomMatrix(rng: Rng, rows: number, cols: number, scale: number): Float32Array[] {
  const out: Float32Array[] = [];
  for (let r = 0; r < rows; r++) {
    const row = new Float32Array(cols);
    for (let c = 0; c < cols; c++) row[c] = rng.normal() * scale;
    out.push(row);
  }
  return out;
}

function matVec(matrix: Float32Array[], vector: Float32Array): Float32Array {
  const out = new Float32Array(matrix.length);
  for (let r = 0; r < matrix.length; r++) {
    const row = matrix[r];
    let sum = 0;
    for (let c = 0; c < row.length; c++) sum += row[c] * vector[c];
    out[r] = sum;
  }
  return out;
}

interface LayerWeights {
  wq: Float32Array[];
  wk: Float32Array[];
  wv: Float32Array[];
  w1: Float32Array[];
  w2: Float32Array[];
}

export class TinyCausalModel implements CausalModelBackend {
  readonly modelId: string;
  readonly vocabSize: number;
  readonly hiddenDim: number;
  readonly numLayers: number;
  readonly eosToken = 0;
  readonly hiddenStatesAvailable: boolean;

  private embedding: Float32Array[];
  private positional: Float32Array[];
  private layers: LayerWeights[];
  private output: Float32Array[];
  private keyCache: Float32Array[][] = [];
  private valueCache: Float32Array[][] = [];
  private position = 0;

  constructor(modelId: string) {
    const config = parseModelId(modelId);
    this.modelId = modelId;
    this.vocabSize = config.vocab;
    this.hiddenDim = config.dim;
    this.numLayers = config.layers;
    this.hiddenStatesAvailable = !config.nohidden;

    const rng = new Rng(config.seed);
    const scale = 1 / Math.sqrt(config.dim);
    this.embedding = randomMatrix(rng, config.vocab, config.dim, 1.0);
    this.positional = randomMatrix(rng, MAX_POSITIONS, config.dim, 0.1);
    this.layers = [];
    for (let l = 0; l < config.layers; l++) {
      this.layers.push({
        wq: randomMatrix(rng, config.dim, config.dim, scale),
        wk: randomMatrix(rng, config.dim, config.dim, scale),
        wv: randomMatrix(rng, config.dim, config.dim, scale),
        w1: randomMatrix(rng, config.dim, config.dim, scale),
        w2: randomMatrix(rng, config.dim, config.dim, scale),
      });
    }
    this.output = randomMatrix(rng, config.vocab, config.dim, scale);
    this.reset();
  }

  reset(): void {
    this.keyCache = this.layers.map(() => []);
    this.valueCache = this.layers.map(() => []);
    this.position = 0;
  }

  step(token: number): { logits: Float32Array; hiddenStates: Float32Array[] | null } {
    if (token < 0 || token >= this.vocabSize) {
      throw new ConfigurationError(`token ${token} outside vocabulary of ${this.vocabSize}`);
    }
    let h = new Float32Array(this.hiddenDim);
    const positionRow = this.positional[this.position % MAX_POSITIONS];
    const embeddingRow = this.embedding[token];
    for (let i = 0; i < this.hiddenDim; i++) h[i] = embeddingRow[i] + positionRow[i];
    const hiddens: Float32Array[] = [h.slice()];

    const attentionScale = 1 / Math.sqrt(this.hiddenDim);
    for (let l = 0; l < this.layers.length; l++) {
      const weights = this.layers[l];
      const q = matVec(weights.wq, h);
      this.keyCache[l].push(matVec(weights.wk, h));
      this.valueCache[l].push(matVec(weights.wv, h));

      const history = this.keyCache[l].length;
      const scores = new Float64Array(history);
      let maxScore = -Infinity;
      for (let j = 0; j < history; j++) {
        let dot = 0;
        const key = this.keyCache[l][j];
        for (let i = 0; i < this.hiddenDim; i++) dot += q[i] * key[i];
        scores[j] = dot * attentionScale;
        if (scores[j] > maxScore) maxScore = scores[j];
      }
      let total = 0;
      for (let j = 0; j < history; j++) {
        scores[j] = Math.exp(scores[j] - maxScore);
        total += scores[j];
      }
      const attended = new Float32Array(this.hiddenDim);
      for (let j = 0; j < history; j++) {
        const weight = scores[j] / total;
        const value = this.valueCache[l][j];
        for (let i = 0; i < this.hiddenDim; i++) attended[i] += weight * value[i];
      }
      for (let i = 0; i < this.hiddenDim; i++) h[i] += attended[i];

      const inner = matVec(weights.w1, h);
      for (let i = 0; i < this.hiddenDim; i++) inner[i] = Math.tanh(inner[i]);
      const mlp = matVec(weights.w2, inner);
      for (let i = 0; i < this.hiddenDim; i++) h[i] += mlp[i];
      hiddens.push(h.slice());
    }

    this.position += 1;
    return {
      logits: matVec(this.output, h),
      hiddenStates: this.hiddenStatesAvailable ? hiddens : null,
    };
  }

  /** Byte-level toy tokenizer over printable characters. */
  encode(text: string): number[] {
    const out: number[] = [];
    for (const char of text) {
      const code = char.charCodeAt(0) - CHAR_BASE;
      out.push(((code % this.vocabSize) + this.vocabSize) % this.vocabSize);
    }
    return out;
  }

  decode(tokens: number[]): string {
    return tokens.map((t) => String.fromCharCode(CHAR_BASE + t)).join("");
  }
}
