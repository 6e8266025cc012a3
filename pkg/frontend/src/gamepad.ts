// Control input: a gamepad axis when one is connected, otherwise an
// on-screen slider. The axis maps linearly from [-1, 1] to [0, 1].

export type ControlReader = () => number | null;

export function axisToValue(axis: number): number {
  return Math.min(1, Math.max(0, (axis + 1) / 2));
}

export interface GamepadLike {
  axes: ReadonlyArray<number>;
}

export type GamepadLister = () => ReadonlyArray<GamepadLike | null>;

/** Reads the first connected gamepad's axis, or null when none is present. */
export function gamepadReader(
  list: GamepadLister = () => navigator.getGamepads?.() ?? [],
  axisIndex = 1,
): ControlReader {
  return () => {
    const pad = list().find((p): p is GamepadLike => p !== null && p !== undefined);
    if (!pad) return null;
    const axis = pad.axes[axisIndex];
    return axis === undefined ? null : axisToValue(axis);
  };
}

/** Prefers the gamepad; falls back to the slider when no pad is connected. */
export function combinedReader(
  gamepad: ControlReader,
  slider: ControlReader,
): ControlReader {
  return () => gamepad() ?? slider();
}
