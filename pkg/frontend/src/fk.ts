/** Client-side forward kinematics for drawing the arm.
 *
 * Link lengths and base position come from session_ack; the client holds
 * no physics of its own beyond this chain.
 */

export type Point = [number, number];

/** Positions of the base and every joint tip, in workspace coordinates. */
export function jointPositions(
  joints: number[],
  links: number[],
  base: number[],
): Point[] {
  if (joints.length !== links.length) {
    throw new Error(
      `joint count ${joints.length} != link count ${links.length}`,
    );
  }
  const pts: Point[] = [[base[0], base[1]]];
  let angle = 0;
  let x = base[0];
  let y = base[1];
  for (let i = 0; i < joints.length; i++) {
    angle += joints[i];
    x += links[i] * Math.cos(angle);
    y += links[i] * Math.sin(angle);
    pts.push([x, y]);
  }
  return pts;
}

/** End-effector position (tip of the last link). */
export function fk(joints: number[], links: number[], base: number[]): Point {
  const pts = jointPositions(joints, links, base);
  return pts[pts.length - 1];
}
