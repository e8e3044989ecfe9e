//! Finder-pattern search on a binarized image: row scans for 1:1:3:1:1
//! dark/light runs along rows and columns, orthogonal cross-checks, clustering, and a
//! geometric pick of the top-left / top-right / bottom-left triple.

use super::decode::DecodeFailure;
use super::tables::{MAX_VERSION, MIN_VERSION};

/// Estimated centre of one finder pattern, in pixel coordinates where pixel
/// `i` spans `[i, i + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinderCenter {
    pub x: f64,
    pub y: f64,
    /// Estimated module pitch in pixels.
    pub module: f64,
}

impl FinderCenter {
    fn dist(&self, other: &FinderCenter) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinderTriple {
    pub top_left: FinderCenter,
    pub top_right: FinderCenter,
    pub bottom_left: FinderCenter,
}

/// Dark/light bitmap; `true` = dark.
pub(crate) struct Bitmap<'a> {
    pub width: usize,
    pub height: usize,
    pub dark: &'a [bool],
}

impl Bitmap<'_> {
    #[inline]
    fn at(&self, x: isize, y: isize) -> Option<bool> {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            None
        } else {
            Some(self.dark[y as usize * self.width + x as usize])
        }
    }
}

const RATIO: [f64; 5] = [1.0, 1.0, 3.0, 1.0, 1.0];

/// Module pitch and worst run deviation (in modules) when `runs` fits
/// 1:1:3:1:1 within half a module.
fn ratio_fit(runs: &[usize; 5]) -> Option<(f64, f64)> {
    if runs.contains(&0) {
        return None;
    }
    let total: usize = runs.iter().sum();
    if total < 7 {
        return None;
    }
    let module = total as f64 / 7.0;
    let err = runs
        .iter()
        .zip(RATIO)
        .map(|(&r, w)| (r as f64 - w * module).abs() / module)
        .fold(0.0, f64::max);
    (err <= 0.5).then_some((module, err))
}

/// A cross-checked hit and how far its runs strayed from the ideal ratio.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    center: FinderCenter,
    err: f64,
}

/// Runs along a line through (cx, cy) in direction (sx, sy), walking both ways
/// from the centre pixel, which must be dark. Returns the five run lengths
/// and the offset of the dark centre run's midpoint along the line.
fn runs_through(bm: &Bitmap<'_>, cx: isize, cy: isize, sx: isize, sy: isize, max_run: usize) -> Option<([usize; 5], f64)> {
    if bm.at(cx, cy) != Some(true) {
        return None;
    }
    // walk one direction: centre dark, light, dark (outer ring)
    let walk = |dir: isize| -> Option<[usize; 3]> {
        let mut counts = [0usize; 3];
        let mut step = if dir > 0 { 1 } else { 0 };
        let mut state = 0;
        let expect = [true, false, true];
        loop {
            let px = bm.at(cx + dir * step * sx, cy + dir * step * sy);
            match px {
                Some(d) if d == expect[state] => {
                    counts[state] += 1;
                    if counts[state] > max_run {
                        return None;
                    }
                }
                Some(_) if state < 2 => {
                    state += 1;
                    counts[state] += 1;
                }
                _ => break,
            }
            step += 1;
        }
        (state == 2).then_some(counts)
    };
    let back = walk(-1)?;
    let fwd = walk(1)?;
    let runs = [back[2], back[1], back[0] + fwd[0], fwd[1], fwd[2]];
    // centre run spans [-back0 + 1, fwd0] in steps from the start pixel
    let start = -(back[0] as f64) + 1.0;
    let mid = start + (back[0] + fwd[0]) as f64 / 2.0 - 0.5;
    Some((runs, mid))
}

/// Scans every row (or every column when `vertical`) for 1:1:3:1:1 runs and
/// cross-checks each hit.
fn scan_lines(bm: &Bitmap<'_>, vertical: bool) -> Vec<Candidate> {
    let (len, lines) = if vertical { (bm.height, bm.width) } else { (bm.width, bm.height) };
    let mut found = Vec::new();
    let mut runs: Vec<(bool, usize, usize)> = Vec::new();
    for line in 0..lines {
        runs.clear();
        for i in 0..len {
            let d = if vertical {
                bm.dark[i * bm.width + line]
            } else {
                bm.dark[line * bm.width + i]
            };
            match runs.last_mut() {
                Some(r) if r.0 == d => r.2 += 1,
                _ => runs.push((d, i, 1)),
            }
        }
        for w in runs.windows(5) {
            if !w[0].0 {
                continue;
            }
            let lens = [w[0].2, w[1].2, w[2].2, w[3].2, w[4].2];
            let Some((module, err)) = ratio_fit(&lens) else { continue };
            let along = w[2].1 as f64 + w[2].2 as f64 / 2.0;
            if let Some(mut c) = cross_check(bm, vertical, along, (w[2].1, w[2].2), line, module) {
                c.err = c.err.max(err);
                found.push(c);
            }
        }
    }
    found
}

/// Confirms a hit on `line` by an orthogonal scan through the centre run,
/// keeping the best-fitting probe. Probing every centre pixel lets an
/// isolated wrong module spoil one probe without losing the pattern. No
/// diagonal check: at one pixel per module a single flipped centre module
/// breaks both diagonals, and the triple geometry already rejects stray hits.
fn cross_check(
    bm: &Bitmap<'_>,
    vertical: bool,
    along: f64,
    (run_start, run_len): (usize, usize),
    line: usize,
    module: f64,
) -> Option<Candidate> {
    let max_run = (module * 5.0).ceil() as usize + 2;
    let mut best: Option<Candidate> = None;
    for pos in run_start..run_start + run_len {
        // pixel coordinates of the probe and the orthogonal step
        let (px, py, sx, sy) = if vertical {
            (line as isize, pos as isize, 1, 0)
        } else {
            (pos as isize, line as isize, 0, 1)
        };
        let Some((oruns, omid)) = runs_through(bm, px, py, sx, sy, max_run) else { continue };
        let Some((omodule, err)) = ratio_fit(&oruns) else { continue };
        if !(0.5..=2.0).contains(&(omodule / module)) || best.is_some_and(|b| b.err <= err) {
            continue;
        }
        let orth = if vertical { px } else { py } as f64 + omid + 0.5;
        let (x, y) = if vertical { (orth, along) } else { (along, orth) };
        best = Some(Candidate {
            center: FinderCenter {
                x,
                y,
                module: (module + omodule) / 2.0,
            },
            err,
        });
    }
    best
}

struct Cluster {
    sum_x: f64,
    sum_y: f64,
    sum_module: f64,
    weight: f64,
    count: usize,
}

impl Cluster {
    fn center(&self) -> FinderCenter {
        FinderCenter {
            x: self.sum_x / self.weight,
            y: self.sum_y / self.weight,
            module: self.sum_module / self.weight,
        }
    }

    fn add(&mut self, c: &Candidate) {
        // exact fits dominate the loose ones a stray module can produce
        let w = (c.err + 0.05).powi(-2);
        self.sum_x += w * c.center.x;
        self.sum_y += w * c.center.y;
        self.sum_module += w * c.center.module;
        self.weight += w;
        self.count += 1;
    }
}

fn cluster(candidates: &[Candidate]) -> Vec<(FinderCenter, usize)> {
    let mut clusters: Vec<Cluster> = Vec::new();
    for c in candidates {
        let p = c.center;
        let hit = clusters.iter_mut().find(|k| {
            let centre = k.center();
            centre.dist(&p) <= centre.module.max(p.module) * 1.5 && (0.5..=2.0).contains(&(centre.module / p.module))
        });
        match hit {
            Some(k) => k.add(c),
            None => {
                let mut k = Cluster {
                    sum_x: 0.0,
                    sum_y: 0.0,
                    sum_module: 0.0,
                    weight: 0.0,
                    count: 0,
                };
                k.add(c);
                clusters.push(k);
            }
        }
    }
    let mut out: Vec<(FinderCenter, usize)> = clusters.iter().map(|k| (k.center(), k.count)).collect();
    // strongest first; position breaks ties so the order is deterministic
    out.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.0.y.total_cmp(&b.0.y))
            .then(a.0.x.total_cmp(&b.0.x))
    });
    out
}

/// Orders three centres so that the right angle is top-left and the triple
/// runs clockwise (x right, y down). Returns the cosine at the corner.
fn arrange(a: FinderCenter, b: FinderCenter, c: FinderCenter) -> (FinderTriple, f64) {
    let pts = [a, b, c];
    let mut best = (0usize, f64::INFINITY);
    for i in 0..3 {
        let (p, q, r) = (pts[i], pts[(i + 1) % 3], pts[(i + 2) % 3]);
        let (ux, uy, vx, vy) = (q.x - p.x, q.y - p.y, r.x - p.x, r.y - p.y);
        let cos = (ux * vx + uy * vy) / (ux.hypot(uy) * vx.hypot(vy)).max(1e-12);
        if cos.abs() < best.1 {
            best = (i, cos.abs());
        }
    }
    let i = best.0;
    let (tl, q, r) = (pts[i], pts[(i + 1) % 3], pts[(i + 2) % 3]);
    let cross = (q.x - tl.x) * (r.y - tl.y) - (q.y - tl.y) * (r.x - tl.x);
    let (tr, bl) = if cross > 0.0 { (q, r) } else { (r, q) };
    (
        FinderTriple {
            top_left: tl,
            top_right: tr,
            bottom_left: bl,
        },
        best.1,
    )
}

/// How well a triple looks like the three finders of one symbol; lower is better.
fn geometry_error(t: &FinderTriple) -> Option<f64> {
    let modules = [t.top_left.module, t.top_right.module, t.bottom_left.module];
    let mmax = modules.iter().copied().fold(f64::MIN, f64::max);
    let mmin = modules.iter().copied().fold(f64::MAX, f64::min);
    if mmax / mmin > 1.6 {
        return None;
    }
    let module = modules.iter().sum::<f64>() / 3.0;
    let top = t.top_left.dist(&t.top_right);
    let left = t.top_left.dist(&t.bottom_left);
    if !(0.8..=1.25).contains(&(top / left)) {
        return None;
    }
    let span = (top + left) / 2.0 / module + 7.0;
    let min_side = 17.0 + 4.0 * MIN_VERSION as f64 - 2.0;
    let max_side = 17.0 + 4.0 * MAX_VERSION as f64 + 2.0;
    if !(min_side..=max_side).contains(&span) {
        return None;
    }
    let ux = (t.top_right.x - t.top_left.x, t.top_right.y - t.top_left.y);
    let vx = (t.bottom_left.x - t.top_left.x, t.bottom_left.y - t.top_left.y);
    let cos = (ux.0 * vx.0 + ux.1 * vx.1) / (top * left);
    if cos.abs() > 0.25 {
        return None;
    }
    Some(cos.abs() + (top / left - 1.0).abs() + (mmax / mmin - 1.0))
}

/// The third corner of an upright symbol from two of its finders, or None
/// when the pair is not a TL-TR, TL-BL or TR-BL pair.
fn complete_pair(a: FinderCenter, b: FinderCenter) -> Option<FinderTriple> {
    let (ma, mb) = (a.module.max(b.module), a.module.min(b.module));
    if ma / mb > 1.6 {
        return None;
    }
    let module = (a.module + b.module) / 2.0;
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let at = |x: f64, y: f64| FinderCenter { x, y, module };
    let triple = if dy.abs() <= 0.25 * dx.abs() {
        let (tl, tr) = if dx > 0.0 { (a, b) } else { (b, a) };
        let (ux, uy) = (tr.x - tl.x, tr.y - tl.y);
        FinderTriple {
            top_left: tl,
            top_right: tr,
            bottom_left: at(tl.x - uy, tl.y + ux),
        }
    } else if dx.abs() <= 0.25 * dy.abs() {
        let (tl, bl) = if dy > 0.0 { (a, b) } else { (b, a) };
        let (vx, vy) = (bl.x - tl.x, bl.y - tl.y);
        FinderTriple {
            top_left: tl,
            top_right: at(tl.x + vy, tl.y - vx),
            bottom_left: bl,
        }
    } else if (dx.abs() - dy.abs()).abs() <= 0.25 * dx.abs().max(dy.abs()) && dx * dy < 0.0 {
        let (tr, bl) = if dx > 0.0 { (b, a) } else { (a, b) };
        let (wx, wy) = (tr.x - bl.x, tr.y - bl.y);
        FinderTriple {
            top_left: at((tr.x + bl.x + wy) / 2.0, (tr.y + bl.y - wx) / 2.0),
            top_right: tr,
            bottom_left: bl,
        }
    } else {
        return None;
    };
    geometry_error(&triple).map(|_| triple)
}

/// Picks the best finder triple. When no three candidates form a symbol, an
/// upright symbol is still located from two finders; the flag reports that
/// one corner was inferred rather than seen.
pub(crate) fn locate_in_bitmap(bm: &Bitmap<'_>) -> Result<(FinderTriple, bool), DecodeFailure> {
    let mut candidates = scan_lines(bm, false);
    candidates.extend(scan_lines(bm, true));
    let top: Vec<_> = cluster(&candidates).into_iter().take(8).collect();
    let mut best: Option<(usize, f64, FinderTriple)> = None;
    let consider = |best: &mut Option<(usize, f64, FinderTriple)>, support: usize, err: f64, triple| {
        let better = match best {
            None => true,
            Some((s, e, _)) => support > *s || (support == *s && err < *e),
        };
        if better {
            *best = Some((support, err, triple));
        }
    };
    for i in 0..top.len() {
        for j in i + 1..top.len() {
            for k in j + 1..top.len() {
                let (triple, _) = arrange(top[i].0, top[j].0, top[k].0);
                if let Some(err) = geometry_error(&triple) {
                    consider(&mut best, top[i].1 + top[j].1 + top[k].1, err, triple);
                }
            }
        }
    }
    if let Some((_, _, triple)) = best {
        return Ok((triple, false));
    }
    for i in 0..top.len() {
        for j in i + 1..top.len() {
            if let Some(triple) = complete_pair(top[i].0, top[j].0) {
                consider(&mut best, top[i].1 + top[j].1, geometry_error(&triple).unwrap_or(f64::MAX), triple);
            }
        }
    }
    best.map(|b| (b.2, true)).ok_or(DecodeFailure::NoFindersFound)
}

/// Finds the three finder patterns in a binary image (`v < 0.5` is dark).
pub fn locate_finders<T: crate::scalar::Scalar>(
    bin: &crate::raster::Image<T>,
) -> Result<FinderTriple, DecodeFailure> {
    let half = T::of(0.5);
    let dark: Vec<bool> = bin.pixels().iter().map(|&v| v < half).collect();
    locate_in_bitmap(&Bitmap {
        width: bin.width(),
        height: bin.height(),
        dark: &dark,
    })
    .map(|(triple, _)| triple)
}
