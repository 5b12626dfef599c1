import { AnnotationClient } from "./api.js";
import { buildSpans, firstMention } from "./highlight.js";
import {
  TaskViewState,
  allComplete,
  controlsEnabled,
  createViewState,
  currentTargetUtterance,
  lockRemaining,
  nextTarget,
  previousTarget,
  progress,
  scalesFor,
  setScore,
  submissionRows,
  targetComplete,
} from "./state.js";
import { AnnotationTask } from "./types.js";

const LEVELS = [1, 2, 3, 4];

interface AppConfig {
  baseUrl: string;
  sessionId: string;
  annotator: string;
  root: HTMLElement;
  now?: () => number; // seconds
}

export class AnnotationApp {
  private client: AnnotationClient;
  private state: TaskViewState | null = null;
  private banner = "";
  private timer: ReturnType<typeof setInterval> | null = null;
  private readonly now: () => number;

  constructor(private readonly config: AppConfig) {
    this.client = new AnnotationClient(config.baseUrl);
    this.now = config.now ?? (() => Date.now() / 1000);
  }

  async start(): Promise<void> {
    const result = await this.client.nextTask(
      this.config.sessionId,
      this.config.annotator,
    );
    if (!result.ok) {
      if (result.rejection.code === "session_complete") {
        this.renderDone("All segments in this session are rated. Thank you!");
      } else {
        this.renderError(result.rejection.detail, () => this.start());
      }
      return;
    }
    this.state = createViewState(result.value);
    this.banner = "";
    this.startCountdown();
    this.render();
  }

  private startCountdown(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = setInterval(() => {
      if (!this.state) return;
      this.renderLock();
      if (controlsEnabled(this.state, this.now())) {
        if (this.timer !== null) clearInterval(this.timer);
        this.render();
      }
    }, 1000);
  }

  private async submit(): Promise<void> {
    if (!this.state) return;
    const result = await this.client.submitRatings(
      this.state.task.task_id,
      submissionRows(this.state),
    );
    if (!result.ok) {
      if (result.rejection.code === "lock_active") {
        this.banner = `Reading lock active: ${Math.ceil(
          lockRemaining(this.state.task, this.now()),
        )}s remaining`;
      } else {
        this.banner = `${result.rejection.code}: ${result.rejection.detail}`;
      }
      this.render();
      return;
    }
    if (result.value.task_complete) {
      this.state = null;
      await this.start(); // chronological: the service decides what is next
    } else {
      this.banner = "Saved. Some targets are still unrated.";
      this.render();
    }
  }

  private scrollToMention(lemma: string): void {
    if (!this.state) return;
    const target = currentTargetUtterance(this.state);
    const overlap = this.state.task.keyword_overlap[String(target.index)] ?? {};
    const position = firstMention(overlap, lemma);
    if (position === null) return;
    const el = this.config.root.querySelector(`[data-word-pos="${position}"]`);
    el?.scrollIntoView({ behavior: "smooth", block: "center" });
  }

  private renderLock(): void {
    if (!this.state) return;
    const label = this.config.root.querySelector("#lock-label");
    if (!label) return;
    const remaining = Math.ceil(lockRemaining(this.state.task, this.now()));
    label.textContent =
      remaining > 0 ? `Reading lock: ${remaining}s` : "Rating unlocked";
  }

  private renderDone(message: string): void {
    this.config.root.innerHTML = `<div class="done">${message}</div>`;
  }

  private renderError(detail: string, retry: () => void): void {
    this.config.root.innerHTML = "";
    const box = document.createElement("div");
    box.className = "error";
    box.textContent = `Could not load the next task: ${detail}`;
    const button = document.createElement("button");
    button.textContent = "Retry";
    button.addEventListener("click", retry);
    box.appendChild(button);
    this.config.root.appendChild(box);
  }

  private render(): void {
    if (!this.state) return;
    const state = this.state;
    const task: AnnotationTask = state.task;
    const target = currentTargetUtterance(state);
    const overlap = task.keyword_overlap[String(target.index)] ?? {};
    const enabled = controlsEnabled(state, this.now());
    const { rated, total } = progress(state);

    const root = this.config.root;
    root.innerHTML = "";

    const header = document.createElement("header");
    header.innerHTML =
      `<h1>${task.topic}</h1>` +
      `<span id="lock-label"></span>` +
      `<span class="progress">Utterance ${state.currentTarget + 1} of ${total}` +
      ` (${rated} rated) &middot; segment ${task.segment_pos + 1}/${task.segment_count}</span>`;
    if (this.banner) {
      const note = document.createElement("div");
      note.className = "banner";
      note.textContent = this.banner;
      header.appendChild(note);
    }
    root.appendChild(header);

    const panels = document.createElement("main");
    panels.className = "panels";
    panels.appendChild(this.renderPriorPanel(task, overlap));
    panels.appendChild(this.renderTargetPanel(state, target, enabled));
    root.appendChild(panels);
    this.renderLock();
  }

  private renderPriorPanel(
    task: AnnotationTask,
    overlap: Record<string, number[]>,
  ): HTMLElement {
    const panel = document.createElement("section");
    panel.className = "prior-panel";
    const heading = document.createElement("h2");
    heading.textContent = "Prior Knowledge";
    panel.appendChild(heading);

    const summary = document.createElement("p");
    summary.className = "summary";
    for (const span of buildSpans(task.prior_summary, overlap)) {
      const word = document.createElement("span");
      word.textContent = span.text + " ";
      word.setAttribute("data-word-pos", String(span.position));
      if (span.lemma !== null) {
        word.className = "keyword";
        const lemma = span.lemma;
        word.addEventListener("click", () => this.scrollToMention(lemma));
      }
      summary.appendChild(word);
    }
    panel.appendChild(summary);

    const windowHeading = document.createElement("h3");
    windowHeading.textContent = "Immediately preceding turns";
    panel.appendChild(windowHeading);
    for (const turn of task.short_window) {
      const row = document.createElement("p");
      row.className = "window-turn";
      row.textContent = `${turn.speaker}: ${turn.text}`;
      panel.appendChild(row);
    }
    return panel;
  }

  private renderTargetPanel(
    state: TaskViewState,
    target: { index: number; speaker: string; stance: string | null; text: string },
    enabled: boolean,
  ): HTMLElement {
    const panel = document.createElement("section");
    panel.className = "target-panel";

    const speaker = document.createElement("h2");
    speaker.textContent = target.speaker;
    if (target.stance) {
      const badge = document.createElement("span");
      badge.className = `stance stance-${target.stance}`;
      badge.textContent = target.stance;
      speaker.appendChild(badge);
    }
    panel.appendChild(speaker);

    const text = document.createElement("p");
    text.className = "target-text";
    text.textContent = target.text;
    panel.appendChild(text);

    for (const scale of scalesFor(state)) {
      const group = document.createElement("fieldset");
      group.disabled = !enabled;
      const legend = document.createElement("legend");
      legend.textContent = scale.replace(/_/g, " ");
      group.appendChild(legend);
      const chosen = state.entered.get(target.index)?.get(scale);
      for (const level of LEVELS) {
        const label = document.createElement("label");
        const radio = document.createElement("input");
        radio.type = "radio";
        radio.name = `${target.index}:${scale}`;
        radio.value = String(level);
        radio.checked = chosen === level;
        radio.addEventListener("change", () => {
          this.state = setScore(state, target.index, scale, level);
          this.render();
        });
        label.appendChild(radio);
        label.appendChild(document.createTextNode(String(level)));
        group.appendChild(label);
      }
      panel.appendChild(group);
    }

    const nav = document.createElement("div");
    nav.className = "nav";
    const prev = document.createElement("button");
    prev.textContent = "Previous";
    prev.disabled = state.currentTarget === 0;
    prev.addEventListener("click", () => {
      this.state = previousTarget(state);
      this.render();
    });
    const next = document.createElement("button");
    next.textContent = "Next";
    next.disabled = state.currentTarget === state.task.targets.length - 1;
    next.addEventListener("click", () => {
      this.state = nextTarget(state);
      this.render();
    });
    const submit = document.createElement("button");
    submit.textContent = allComplete(state) ? "Submit segment" : "Submit rated";
    submit.disabled = !enabled || !targetComplete(state, target.index);
    submit.addEventListener("click", () => void this.submit());
    nav.append(prev, next, submit);
    panel.appendChild(nav);
    return panel;
  }
}

export function mount(config: AppConfig): AnnotationApp {
  const app = new AnnotationApp(config);
  void app.start();
  return app;
}
