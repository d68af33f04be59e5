// Query grid shared by every prediction request.

export const GRID_POINTS = 97;

/**
 * 97 evenly spaced query times spanning (cutTime, tau].
 *
 * The first point sits one step after the cut rather than on it because the
 * service rejects query times at or before the cut; the last point lands on
 * tau exactly.  Over a 48h horizon the spacing is just under half an hour.
 */
export function queryGrid(cutTime: number, tau: number): number[] {
  if (!(tau > cutTime)) {
    throw new Error(`horizon must exceed the cut: cut=${cutTime}, tau=${tau}`);
  }
  const step = (tau - cutTime) / GRID_POINTS;
  return Array.from({ length: GRID_POINTS }, (_, k) => cutTime + step * (k + 1));
}
