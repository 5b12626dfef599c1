import {
  AnnotationTask,
  LOCK_SECONDS,
  VARIANT_SCALES,
} from "./types.js";

/** View state for one served task; ratings live here only until the
 * service acknowledges them, so a reload rebuilds from the server. */
export interface TaskViewState {
  task: AnnotationTask;
  currentTarget: number;
  /** target utterance index -> scale name -> chosen level */
  entered: Map<number, Map<string, number>>;
}

export function createViewState(task: AnnotationTask): TaskViewState {
  if (task.targets.length === 0) {
    throw new Error("task has no target utterances");
  }
  return { task, currentTarget: 0, entered: new Map() };
}

/** Seconds of reading lock left, anchored to the server's served_at so a
 * page refresh resumes the countdown instead of restarting it. */
export function lockRemaining(task: AnnotationTask, nowSeconds: number): number {
  const elapsed = nowSeconds - task.served_at;
  return Math.max(0, LOCK_SECONDS - elapsed);
}

export function controlsEnabled(state: TaskViewState, nowSeconds: number): boolean {
  return lockRemaining(state.task, nowSeconds) <= 0;
}

export function scalesFor(state: TaskViewState): readonly string[] {
  return VARIANT_SCALES[state.task.variant];
}

export function setScore(
  state: TaskViewState,
  targetIndex: number,
  scale: string,
  level: number,
): TaskViewState {
  if (!state.task.targets.some((t) => t.index === targetIndex)) {
    throw new Error(`unknown target utterance ${targetIndex}`);
  }
  if (!scalesFor(state).includes(scale)) {
    throw new Error(`scale ${scale} not part of variant ${state.task.variant}`);
  }
  if (!Number.isInteger(level) || level < 1 || level > 4) {
    throw new Error(`level ${level} outside 1..4`);
  }
  const entered = new Map(state.entered);
  const perTarget = new Map(entered.get(targetIndex) ?? []);
  perTarget.set(scale, level);
  entered.set(targetIndex, perTarget);
  return { ...state, entered };
}

export function targetComplete(state: TaskViewState, targetIndex: number): boolean {
  const perTarget = state.entered.get(targetIndex);
  if (!perTarget) return false;
  return scalesFor(state).every((scale) => perTarget.has(scale));
}

export function ratedCount(state: TaskViewState): number {
  return state.task.targets.filter((t) => targetComplete(state, t.index)).length;
}

/** "Utterance 3 of 6"-style progress: rated targets over total. */
export function progress(state: TaskViewState): { rated: number; total: number } {
  return { rated: ratedCount(state), total: state.task.targets.length };
}

export function allComplete(state: TaskViewState): boolean {
  return ratedCount(state) === state.task.targets.length;
}

/** Previous/Next controls may revisit already-rated targets. */
export function goTo(state: TaskViewState, position: number): TaskViewState {
  const clamped = Math.min(Math.max(position, 0), state.task.targets.length - 1);
  return { ...state, currentTarget: clamped };
}

export function nextTarget(state: TaskViewState): TaskViewState {
  return goTo(state, state.currentTarget + 1);
}

export function previousTarget(state: TaskViewState): TaskViewState {
  return goTo(state, state.currentTarget - 1);
}

export function currentTargetUtterance(state: TaskViewState) {
  return state.task.targets[state.currentTarget];
}

/** Rows for submission; only fully rated targets are included. */
export function submissionRows(state: TaskViewState) {
  return state.task.targets
    .filter((t) => targetComplete(state, t.index))
    .map((t) => ({
      utterance_index: t.index,
      scores: Object.fromEntries(state.entered.get(t.index) ?? []),
    }));
}
