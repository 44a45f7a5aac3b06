/** Fixed instruction templates, keyed by task family. */

import type { TemplateId } from "./types.js";

const TEMPLATES: Record<TemplateId, string> = {
  math:
    "Solve the following math problem step-by-step.\n" +
    "Simplify your answer as much as possible. Present your final answer as \\boxed{Your Answer}.",
  multiple_choice:
    "You are given a multiple-choice question with five options (A-E).\n" +
    "Solve it step by step, then present only one letter (A-E) in the form \\boxed{Letter}.\n" +
    "Remember to output \\boxed{Letter} at the end of your answer or it will be considered incorrect.",
  code_output:
    "Analyze the following problem step-by-step and determine what the code outputs given the input.\n" +
    "Make sure your final answer is enclosed within \\boxed{...},\n" +
    "and that the content inside \\boxed{...} is valid Python literal syntax.",
};

export function templateIds(): TemplateId[] {
  return Object.keys(TEMPLATES) as TemplateId[];
}

/** Instruction above, blank line, question below. */
export function renderPrompt(templateId: TemplateId, question: string): string {
  const instruction = TEMPLATES[templateId];
  if (instruction === undefined) {
    throw new Error(`unknown template ${templateId}`);
  }
  return `${instruction}\n\n${question}`;
}
