/** DOM rendering: trial screens, the completion screen and results table. */

import { Answer, ApiClient, RejectedResponseError, ServiceError, StimulusInfo } from "./api.js";
import { resultRows, hasAnyResults } from "./results.js";
import { SessionRunner } from "./session.js";

const MOS_INSTRUCTIONS =
  "Listen to the utterance carefully, then rate its overall quality on a " +
  "1-5 scale: does it sound natural, non-robotic, and noiseless? " +
  "Ignore the speaking rate in your scoring.";
const SMOS_INSTRUCTIONS =
  "Listen to the utterance and the reference, then rate how similar the " +
  "speakers sound on a 1-5 scale. Ignore the speaking rate in your " +
  "scoring; the reference speaker often speaks faster.";
const PAIR_INSTRUCTIONS = "Select the word you heard among the options below.";

const SCALE_LABELS: Record<number, string> = {
  1: "bad",
  2: "poor",
  3: "fair",
  4: "good",
  5: "excellent",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

interface TrialCallbacks {
  onSubmit(answer: Answer): Promise<void>;
}

/**
 * One trial screen. The submit control stays disabled until playback has
 * started at least once and exactly one answer is selected.
 */
export class TrialView {
  readonly root: HTMLElement;
  private playbackStarted = false;
  private selected: Answer | null = null;
  private submitButton: HTMLButtonElement;
  private message: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly stimulus: StimulusInfo,
    progress: { index: number; total: number },
    private readonly callbacks: TrialCallbacks,
    private readonly random: () => number = Math.random,
  ) {
    this.root = el("section", "trial");
    this.root.appendChild(
      el("p", "progress", `Trial ${progress.index + 1} of ${progress.total}`),
    );
    this.root.appendChild(el("p", "instructions", this.instructions()));
    this.root.appendChild(this.audioBlock("Utterance", this.api.audioUrl(stimulus.stimulus_id)));
    if (stimulus.kind === "smos") {
      this.root.appendChild(
        this.audioBlock("Reference", this.api.referenceUrl(stimulus.stimulus_id), false),
      );
    }
    this.root.appendChild(this.answerBlock());
    this.message = el("p", "message");
    this.root.appendChild(this.message);
    this.submitButton = el("button", "submit", "Submit answer");
    this.submitButton.disabled = true;
    this.submitButton.addEventListener("click", () => void this.handleSubmit());
    this.root.appendChild(this.submitButton);
  }

  private instructions(): string {
    if (this.stimulus.kind === "mos") return MOS_INSTRUCTIONS;
    if (this.stimulus.kind === "smos") return SMOS_INSTRUCTIONS;
    return PAIR_INSTRUCTIONS;
  }

  private audioBlock(label: string, url: string, gates = true): HTMLElement {
    const block = el("div", "audio-block");
    block.appendChild(el("span", "audio-label", label));
    const audio = el("audio");
    audio.controls = true;
    audio.preload = "auto";
    audio.src = url;
    if (gates) {
      audio.addEventListener("play", () => {
        this.playbackStarted = true;
        this.refreshSubmitState();
      });
    }
    block.appendChild(audio);
    return block;
  }

  private answerBlock(): HTMLElement {
    const block = el("div", "answers");
    if (this.stimulus.kind === "minimal_pair") {
      const pair = this.stimulus.pair;
      if (!pair) throw new Error(`minimal_pair stimulus ${this.stimulus.stimulus_id} has no pair`);
      let options: Array<["word" | "confusable", string]> = [
        ["word", pair.word],
        ["confusable", pair.confusable],
      ];
      // randomized left/right order per trial, to avoid position bias
      if (this.random() < 0.5) options = [options[1]!, options[0]!];
      for (const [choice, label] of options) {
        block.appendChild(this.choiceButton({ choice }, label));
      }
      block.appendChild(this.choiceButton({ choice: "neither" }, "none of these"));
    } else {
      for (let value = 1; value <= 5; value += 1) {
        block.appendChild(
          this.choiceButton({ value }, `${value} (${SCALE_LABELS[value]})`),
        );
      }
    }
    return block;
  }

  private choiceButton(answer: Answer, label: string): HTMLButtonElement {
    const button = el("button", "choice", label);
    button.addEventListener("click", () => {
      this.selected = answer;
      for (const sibling of Array.from(
        this.root.querySelectorAll<HTMLButtonElement>("button.choice"),
      )) {
        sibling.classList.toggle("selected", sibling === button);
      }
      this.refreshSubmitState();
    });
    return button;
  }

  private refreshSubmitState(): void {
    this.submitButton.disabled = !(this.playbackStarted && this.selected !== null);
  }

  private async handleSubmit(): Promise<void> {
    if (this.selected === null) return;
    this.submitButton.disabled = true;
    this.message.textContent = "";
    try {
      await this.callbacks.onSubmit(this.selected);
    } catch (error) {
      if (error instanceof RejectedResponseError) {
        this.message.textContent = `The service rejected this answer: ${error.message}`;
      } else if (error instanceof ServiceError) {
        this.message.textContent =
          "Could not reach the service. Your selection is kept; press Submit to retry.";
      } else {
        throw error;
      }
      // selection survives; allow retrying
      this.refreshSubmitState();
    }
  }
}

export class App {
  constructor(
    private readonly api: ApiClient,
    private readonly container: HTMLElement,
    private readonly random: () => number = Math.random,
  ) {}

  async runSession(runner: SessionRunner): Promise<void> {
    const stimulusId = runner.current();
    if (stimulusId === null) {
      this.renderCompletion(runner);
      return;
    }
    const stimulus = await this.api.getStimulus(stimulusId);
    const view = new TrialView(
      this.api,
      stimulus,
      runner.progress(),
      {
        onSubmit: async (answer) => {
          await runner.submit(answer);
          await this.runSession(runner);
        },
      },
      this.random,
    );
    this.container.replaceChildren(view.root);
  }

  private renderCompletion(runner: SessionRunner): void {
    const done = el("section", "completion");
    done.appendChild(el("h2", undefined, "Session complete"));
    done.appendChild(
      el(
        "p",
        "summary",
        `Thank you. ${runner.answeredCount()} of ${runner.playlist.length} answers were submitted.`,
      ),
    );
    runner.clearSaved();
    this.container.replaceChildren(done);
  }

  async renderResults(testId: string): Promise<void> {
    const payload = await this.api.getResults(testId);
    const section = el("section", "results");
    section.appendChild(el("h2", undefined, `Results for ${testId}`));
    if (!hasAnyResults(payload)) {
      section.appendChild(el("p", "empty", "no responses yet"));
    } else {
      const table = el("table", "results-table");
      const head = el("tr");
      for (const name of ["Metric", "Value", "Detail"]) {
        head.appendChild(el("th", undefined, name));
      }
      table.appendChild(head);
      for (const row of resultRows(payload)) {
        const tr = el("tr");
        tr.appendChild(el("td", "metric", row.metric));
        tr.appendChild(el("td", "value", row.value));
        tr.appendChild(el("td", "detail", row.detail));
        table.appendChild(tr);
      }
      section.appendChild(table);
    }
    this.container.replaceChildren(section);
  }
}
