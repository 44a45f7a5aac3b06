#!/usr/bin/env node
/**
 * Command-line trace extraction.
 *
 * Reads a questions file (JSON lines: question_id, prompt, reference),
 * samples rollouts from the configured model, grades completions, and
 * writes a trace dataset directory. Every generation setting is a flag;
 * identical invocations produce identical datasets.
 */

import { readFileSync } from "node:fs";
import { argv, exit, stderr, stdout } from "node:process";

import { extractTraces } from "./extract.js";
import { templateIds } from "./templates.js";
import {
  ConfigurationError,
  GEN_SPEC_DEFAULTS,
  type GenSpec,
  type GradeRule,
  type QuestionRecord,
  type TemplateId,
} from "./types.js";

const USAGE = `usage: elhsr-extract --model <id> --questions <file.jsonl> --out <dir>
    [--mode hidden|logits]       capture target (default ${GEN_SPEC_DEFAULTS.mode})
    [--temperature <t>]          sampling temperature (default ${GEN_SPEC_DEFAULTS.temperature})
    [--top-p <p>]                nucleus mass (default ${GEN_SPEC_DEFAULTS.topP})
    [--max-new-tokens <n>]       generation cap (default ${GEN_SPEC_DEFAULTS.maxNewTokens})
    [--rollouts <n>]             paths per question (default ${GEN_SPEC_DEFAULTS.rolloutsPerQuestion})
    [--template <id>]            ${templateIds().join(" | ")} (default ${GEN_SPEC_DEFAULTS.templateId})
    [--seed <n>]                 generation seed (default ${GEN_SPEC_DEFAULTS.seed})
    [--grade boxed|external]     labeling rule (default boxed)
    [--labels <file.json>]       external labels: {question_id: [0/1 per rollout]}`;

function parseArgs(args: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < args.length; i += 2) {
    const flag = args[i];
    const value = args[i + 1];
    if (!flag.startsWith("--") || value === undefined) {
      throw new ConfigurationError(`malformed arguments near ${flag}`);
    }
    out.set(flag.slice(2), value);
  }
  return out;
}

function readQuestions(path: string): QuestionRecord[] {
  const questions: QuestionRecord[] = [];
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    if (!line.trim()) continue;
    const obj = JSON.parse(line);
    if (typeof obj.question_id !== "string" || typeof obj.prompt !== "string") {
      throw new ConfigurationError("questions file lines need question_id and prompt");
    }
    questions.push({
      questionId: obj.question_id,
      prompt: obj.prompt,
      reference: typeof obj.reference === "string" ? obj.reference : "",
    });
  }
  return questions;
}

export function main(args: string[]): number {
  let flags: Map<string, string>;
  try {
    flags = parseArgs(args);
  } catch (error) {
    stderr.write(`${(error as Error).message}\n${USAGE}\n`);
    return 2;
  }
  const required = ["model", "questions", "out"];
  for (const name of required) {
    if (!flags.has(name)) {
      stderr.write(`missing --${name}\n${USAGE}\n`);
      return 2;
    }
  }
  try {
    const mode = (flags.get("mode") ?? GEN_SPEC_DEFAULTS.mode) as GenSpec["mode"];
    if (mode !== "hidden" && mode !== "logits") {
      throw new ConfigurationError(`--mode must be hidden or logits, got ${mode}`);
    }
    const template = (flags.get("template") ?? GEN_SPEC_DEFAULTS.templateId) as TemplateId;
    if (!templateIds().includes(template)) {
      throw new ConfigurationError(`--template must be one of ${templateIds().join(", ")}`);
    }
    const spec: GenSpec = {
      modelId: flags.get("model")!,
      mode,
      temperature: Number(flags.get("temperature") ?? GEN_SPEC_DEFAULTS.temperature),
      topP: Number(flags.get("top-p") ?? GEN_SPEC_DEFAULTS.topP),
      maxNewTokens: Number(flags.get("max-new-tokens") ?? GEN_SPEC_DEFAULTS.maxNewTokens),
      rolloutsPerQuestion: Number(flags.get("rollouts") ?? GEN_SPEC_DEFAULTS.rolloutsPerQuestion),
      templateId: template,
      seed: Number(flags.get("seed") ?? GEN_SPEC_DEFAULTS.seed),
    };
    const gradeKind = flags.get("grade") ?? "boxed";
    let gradeRule: GradeRule;
    if (gradeKind === "boxed") {
      gradeRule = { kind: "boxed_exact" };
    } else if (gradeKind === "external") {
      const labelsPath = flags.get("labels");
      if (!labelsPath) throw new ConfigurationError("--grade external requires --labels");
      gradeRule = {
        kind: "external_labels",
        labels: JSON.parse(readFileSync(labelsPath, "utf-8")),
      };
    } else {
      throw new ConfigurationError(`--grade must be boxed or external, got ${gradeKind}`);
    }

    const questions = readQuestions(flags.get("questions")!);
    const result = extractTraces(questions, spec, gradeRule, flags.get("out")!);
    stdout.write(
      JSON.stringify({
        dataset: result.directory,
        mode: result.meta.mode,
        num_layers: result.meta.numLayers,
        per_layer_dim: result.meta.perLayerDim,
        paths: result.paths.length,
      }) + "\n",
    );
    return 0;
  } catch (error) {
    if (error instanceof ConfigurationError) {
      stderr.write(`${error.message}\n`);
      return 2;
    }
    stderr.write(`${(error as Error).stack ?? error}\n`);
    return 1;
  }
}

if (import.meta.url === `file://${argv[1]}`) {
  exit(main(argv.slice(2)));
}
