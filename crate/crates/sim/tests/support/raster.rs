//! Brute-force coverage oracle shared with the acceptance suite.

use mosaic_core::Point2;

/// Cells whose centre lies within `radius` of the path, by direct projection
/// onto each segment.
pub fn brute_force_count(
    origin: Point2,
    cell: f64,
    nx: usize,
    ny: usize,
    path: &[Point2],
    radius: f64,
) -> usize {
    let within = |c: (f64, f64)| {
        if path.len() == 1 {
            let (dx, dy) = (c.0 - path[0].x, c.1 - path[0].y);
            return dx * dx + dy * dy <= radius * radius;
        }
        path.windows(2).any(|w| {
            let (ax, ay, bx, by) = (w[0].x, w[0].y, w[1].x, w[1].y);
            let (vx, vy) = (bx - ax, by - ay);
            let len2 = vx * vx + vy * vy;
            let s = if len2 == 0.0 {
                0.0
            } else {
                (((c.0 - ax) * vx + (c.1 - ay) * vy) / len2).clamp(0.0, 1.0)
            };
            let (px, py) = (ax + s * vx, ay + s * vy);
            ((c.0 - px).powi(2) + (c.1 - py).powi(2)).sqrt() <= radius
        })
    };
    let mut count = 0;
    for j in 0..ny {
        for i in 0..nx {
            let c = (
                origin.x + (i as f64 + 0.5) * cell,
                origin.y + (j as f64 + 0.5) * cell,
            );
            if within(c) {
                count += 1;
            }
        }
    }
    count
}
