// Plan editor state and its pure update functions. Actions snap to a
// half-hour grid and must lie strictly after the decision cut; every update
// returns a fresh state object, so nothing here can mutate a displayed
// history.

export interface PlanAction {
  id: number;
  type: string;
  time: number;
}

export interface PlanEditorState {
  traceId: string | null;
  cutTime: number;
  tau: number;
  actions: PlanAction[];
  showFactual: boolean;
}

export const SNAP_STEP = 0.5;

let nextActionId = 1;

export function emptyState(): PlanEditorState {
  return { traceId: null, cutTime: 0, tau: 0, actions: [], showFactual: false };
}

export function forTrace(
  traceId: string,
  cutTime: number,
  tau: number,
): PlanEditorState {
  return { traceId, cutTime, tau, actions: [], showFactual: false };
}

/** Snap onto the half-hour grid, clamped into (cutTime, tau]. */
export function snapTime(state: PlanEditorState, time: number): number {
  const snapped = Math.round(time / SNAP_STEP) * SNAP_STEP;
  // The smallest grid point strictly after the cut; the cut itself may sit
  // on the grid, in which case the next step over is the floor.
  const lowest = Math.floor(state.cutTime / SNAP_STEP) * SNAP_STEP + SNAP_STEP;
  return Math.min(Math.max(snapped, lowest), state.tau);
}

function sorted(actions: PlanAction[]): PlanAction[] {
  return [...actions].sort((a, b) => a.time - b.time || a.id - b.id);
}

export function addAction(
  state: PlanEditorState,
  type: string,
  time: number,
): PlanEditorState {
  const action = { id: nextActionId++, type, time: snapTime(state, time) };
  return { ...state, actions: sorted([...state.actions, action]) };
}

export function moveAction(
  state: PlanEditorState,
  id: number,
  time: number,
): PlanEditorState {
  const moved = state.actions.map((a) =>
    a.id === id ? { ...a, time: snapTime(state, time) } : a,
  );
  return { ...state, actions: sorted(moved) };
}

export function removeAction(state: PlanEditorState, id: number): PlanEditorState {
  return { ...state, actions: state.actions.filter((a) => a.id !== id) };
}

export function toggleFactual(state: PlanEditorState): PlanEditorState {
  return { ...state, showFactual: !state.showFactual };
}
