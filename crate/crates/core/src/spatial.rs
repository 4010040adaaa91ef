//! Room geometry.
//!
//! Three coordinate frames are in play: the tracked floor (`FloorPoint`, meters from the
//! front-left corner), the screen perimeter (`PerimeterPoint`, a counterclockwise arc-length
//! starting at that same corner), and the unrolled pixel strip (`ScreenPixel`).
//!
//! Everything in here is a pure function of its inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpatialError {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("point ({x}, {y}) lies outside the room")]
    OutsideRoom { x: f64, y: f64 },
    #[error("arc length {0} outside [0, perimeter)")]
    ArcOutOfRange(f64),
    #[error("pixel column {0} outside [0, px_w)")]
    PixelOutOfRange(i64),
    #[error("invalid room: {0}")]
    InvalidRoom(String),
}

/// Physical and pixel dimensions of the enclosed screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomSpec {
    pub width_m: f64,
    pub depth_m: f64,
    pub screen_height_m: f64,
    pub px_w: u32,
    pub px_h: u32,
    pub active_enter_m: f64,
    pub active_exit_m: f64,
    pub columns_per_side: u32,
    /// Distance the projection must travel past a column boundary before the column switches.
    pub column_dead_band_m: f64,
}

impl Default for RoomSpec {
    fn default() -> Self {
        Self {
            width_m: 12.0,
            depth_m: 10.0,
            screen_height_m: 5.0,
            px_w: 14500,
            px_h: 1200,
            active_enter_m: 2.0,
            active_exit_m: 2.2,
            columns_per_side: 9,
            column_dead_band_m: 0.1,
        }
    }
}

impl RoomSpec {
    /// Default room with a different floor footprint, e.g. from `--room 12x10`.
    pub fn with_size(width_m: f64, depth_m: f64) -> Self {
        Self { width_m, depth_m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SpatialError> {
        let bad = |msg: &str| Err(SpatialError::InvalidRoom(msg.to_string()));
        if !(self.width_m.is_finite() && self.width_m > 0.0) {
            return bad("width_m must be > 0");
        }
        if !(self.depth_m.is_finite() && self.depth_m > 0.0) {
            return bad("depth_m must be > 0");
        }
        if self.px_w < 1 || self.px_h < 1 {
            return bad("pixel dimensions must be >= 1");
        }
        let half = self.width_m.min(self.depth_m) / 2.0;
        if !(self.active_enter_m > 0.0
            && self.active_enter_m <= self.active_exit_m
            && self.active_exit_m < half)
        {
            return bad("need 0 < active_enter_m <= active_exit_m < min(width, depth)/2");
        }
        if self.columns_per_side < 1 {
            return bad("columns_per_side must be >= 1");
        }
        if !(self.column_dead_band_m >= 0.0) {
            return bad("column_dead_band_m must be >= 0");
        }
        Ok(())
    }

    pub fn perimeter_m(&self) -> f64 {
        2.0 * (self.width_m + self.depth_m)
    }

    /// Pixels per meter of arc length.
    pub fn px_per_m(&self) -> f64 {
        self.px_w as f64 / self.perimeter_m()
    }

    pub fn wall_length(&self, wall: Wall) -> f64 {
        match wall {
            Wall::Front | Wall::Back => self.width_m,
            Wall::Right | Wall::Left => self.depth_m,
        }
    }

    /// Arc length at which `wall` begins.
    pub fn wall_start(&self, wall: Wall) -> f64 {
        let (w, d) = (self.width_m, self.depth_m);
        match wall {
            Wall::Front => 0.0,
            Wall::Right => w,
            Wall::Back => w + d,
            Wall::Left => 2.0 * w + d,
        }
    }

    pub fn column_width_m(&self) -> f64 {
        self.depth_m / self.columns_per_side as f64
    }

    pub fn contains(&self, p: FloorPoint) -> bool {
        (0.0..=self.width_m).contains(&p.x) && (0.0..=self.depth_m).contains(&p.y)
    }

    pub fn clamp(&self, x: f64, y: f64) -> FloorPoint {
        FloorPoint { x: x.clamp(0.0, self.width_m), y: y.clamp(0.0, self.depth_m) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloorPoint {
    pub x: f64,
    pub y: f64,
}

impl FloorPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: FloorPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wall {
    Front,
    Right,
    Back,
    Left,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Front, Wall::Right, Wall::Back, Wall::Left];
}

/// A location on the screen perimeter. `wall` and `t` are always derived from `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimeterPoint {
    pub s: f64,
    pub wall: Wall,
    pub t: f64,
}

impl PerimeterPoint {
    pub fn at(s: f64, room: &RoomSpec) -> Result<Self, SpatialError> {
        let p = room.perimeter_m();
        if !(s.is_finite() && (0.0..p).contains(&s)) {
            return Err(SpatialError::ArcOutOfRange(s));
        }
        let wall = Wall::ALL
            .into_iter()
            .rev()
            .find(|w| s >= room.wall_start(*w))
            .unwrap_or(Wall::Front);
        Ok(Self { s, wall, t: s - room.wall_start(wall) })
    }
}

/// An integer position on the unrolled pixel strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenPixel {
    pub u: u32,
    pub v: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationState {
    pub active: bool,
    pub last_clearance_m: f64,
}

impl Default for ActivationState {
    fn default() -> Self {
        Self { active: false, last_clearance_m: f64::INFINITY }
    }
}

/// Which part of the screen a perimeter point falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    LeftSide,
    RightSide,
    FrontShared,
    BackInactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnAssignment {
    pub region: Region,
    pub column: Option<u32>,
}

impl ColumnAssignment {
    /// Arc-length interval `[lo, hi)` covered by this assignment.
    pub fn arc_span(&self, room: &RoomSpec) -> (f64, f64) {
        let cw = room.column_width_m();
        let col = self.column.unwrap_or(0) as f64;
        match self.region {
            Region::FrontShared => (0.0, room.width_m),
            Region::BackInactive => {
                let lo = room.wall_start(Wall::Back);
                (lo, lo + room.width_m)
            }
            Region::RightSide => {
                let lo = room.wall_start(Wall::Right) + col * cw;
                (lo, lo + cw)
            }
            Region::LeftSide => {
                let lo = room.wall_start(Wall::Left) + col * cw;
                (lo, lo + cw)
            }
        }
    }
}

/// Nearest point on the screen perimeter and the distance to it.
///
/// Exact ties between walls go to the candidate with the smaller arc length.
pub fn project_to_perimeter(
    p: FloorPoint,
    room: &RoomSpec,
) -> Result<(PerimeterPoint, f64), SpatialError> {
    if !(p.x.is_finite() && p.y.is_finite()) {
        return Err(SpatialError::NonFinite { x: p.x, y: p.y });
    }
    if !room.contains(p) {
        return Err(SpatialError::OutsideRoom { x: p.x, y: p.y });
    }
    let (w, d) = (room.width_m, room.depth_m);
    let perimeter = room.perimeter_m();
    // (clearance, arc length of the perpendicular foot)
    let candidates = [
        (p.y, p.x),
        (w - p.x, w + p.y),
        (d - p.y, w + d + (w - p.x)),
        (p.x, 2.0 * w + d + (d - p.y)),
    ];
    let (clearance, s) = candidates
        .into_iter()
        .map(|(c, s)| (c, if s >= perimeter { s - perimeter } else { s }))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .expect("four candidates");
    Ok((PerimeterPoint::at(s, room)?, clearance))
}

pub fn arc_to_pixel(s: f64, room: &RoomSpec) -> Result<u32, SpatialError> {
    let perimeter = room.perimeter_m();
    if !(s.is_finite() && (0.0..perimeter).contains(&s)) {
        return Err(SpatialError::ArcOutOfRange(s));
    }
    let u = (s * room.px_w as f64 / perimeter).floor() as u32;
    Ok(u.min(room.px_w - 1))
}

/// Arc length at the center of pixel column `u`.
pub fn pixel_to_arc(u: i64, room: &RoomSpec) -> Result<f64, SpatialError> {
    if !(0..room.px_w as i64).contains(&u) {
        return Err(SpatialError::PixelOutOfRange(u));
    }
    Ok((u as f64 + 0.5) * room.perimeter_m() / room.px_w as f64)
}

/// Hysteresis: enter at `clearance <= active_enter_m`, leave at `clearance > active_exit_m`.
pub fn update_activation(
    state: ActivationState,
    clearance: f64,
    room: &RoomSpec,
) -> ActivationState {
    let active = if state.active {
        clearance <= room.active_exit_m
    } else {
        clearance <= room.active_enter_m
    };
    ActivationState { active, last_clearance_m: clearance }
}

pub fn column_index(pp: &PerimeterPoint, room: &RoomSpec) -> ColumnAssignment {
    let n = room.columns_per_side;
    let bin = || {
        let c = (pp.t / room.column_width_m()).floor();
        (c.max(0.0) as u32).min(n - 1)
    };
    match pp.wall {
        Wall::Front => ColumnAssignment { region: Region::FrontShared, column: None },
        Wall::Back => ColumnAssignment { region: Region::BackInactive, column: None },
        Wall::Right => ColumnAssignment { region: Region::RightSide, column: Some(bin()) },
        Wall::Left => ColumnAssignment { region: Region::LeftSide, column: Some(bin()) },
    }
}

/// Bottom-of-screen anchor under which a user's feedback rings are drawn.
pub fn feedback_anchor(p: FloorPoint, room: &RoomSpec) -> Result<ScreenPixel, SpatialError> {
    let (pp, _) = project_to_perimeter(p, room)?;
    Ok(ScreenPixel { u: arc_to_pixel(pp.s, room)?, v: room.px_h - 1 })
}

/// Pixel columns `[first, last]` spanned by an arc interval.
pub fn arc_span_pixels(lo: f64, hi: f64, room: &RoomSpec) -> (u32, u32) {
    let p = room.perimeter_m();
    let first = arc_to_pixel(lo.clamp(0.0, p - f64::EPSILON * p), room).unwrap_or(0);
    let last = if hi >= p {
        room.px_w - 1
    } else {
        arc_to_pixel(hi, room).unwrap_or(room.px_w - 1).saturating_sub(1).max(first)
    };
    (first, last)
}

/// Distance from `s` to the arc interval `[lo, hi)` on the closed perimeter loop.
fn circular_gap(s: f64, lo: f64, hi: f64, perimeter: f64) -> f64 {
    [s - perimeter, s, s + perimeter]
        .into_iter()
        .map(|x| {
            if x < lo {
                lo - x
            } else if x > hi {
                x - hi
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Column selection with a dead band: the assignment only changes once the projection has
/// moved at least `column_dead_band_m` beyond the current assignment's arc span.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnTracker {
    current: Option<ColumnAssignment>,
}

impl ColumnTracker {
    pub fn current(&self) -> Option<ColumnAssignment> {
        self.current
    }

    pub fn reset(&mut self) {
        self.current = None;
    }

    /// Feeds one projection; returns `Some((from, to))` when the assignment switched.
    pub fn update(
        &mut self,
        pp: &PerimeterPoint,
        room: &RoomSpec,
    ) -> Option<(Option<ColumnAssignment>, ColumnAssignment)> {
        let raw = column_index(pp, room);
        match self.current {
            None => {
                self.current = Some(raw);
                Some((None, raw))
            }
            Some(cur) if cur == raw => None,
            Some(cur) => {
                let (lo, hi) = cur.arc_span(room);
                if circular_gap(pp.s, lo, hi, room.perimeter_m()) >= room.column_dead_band_m {
                    self.current = Some(raw);
                    Some((Some(cur), raw))
                } else {
                    None
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn room() -> RoomSpec {
        RoomSpec::default()
    }

    /// Minimum distance to the perimeter sampled every millimeter.
    fn brute_force_clearance(p: FloorPoint, room: &RoomSpec) -> f64 {
        let (w, d) = (room.width_m, room.depth_m);
        let mut best = f64::INFINITY;
        let steps_w = (w * 1000.0).round() as usize;
        let steps_d = (d * 1000.0).round() as usize;
        for i in 0..=steps_w {
            let x = i as f64 / 1000.0;
            best = best.min(p.distance(FloorPoint::new(x, 0.0)));
            best = best.min(p.distance(FloorPoint::new(x, d)));
        }
        for j in 0..=steps_d {
            let y = j as f64 / 1000.0;
            best = best.min(p.distance(FloorPoint::new(0.0, y)));
            best = best.min(p.distance(FloorPoint::new(w, y)));
        }
        best
    }

    #[test]
    fn defaults_have_44m_perimeter() {
        assert_eq!(room().perimeter_m(), 44.0);
        room().validate().unwrap();
    }

    #[test]
    fn invalid_rooms_rejected() {
        let r = RoomSpec { active_enter_m: 2.5, ..room() };
        assert!(r.validate().is_err());
        let r = RoomSpec { active_exit_m: 5.0, ..room() };
        assert!(r.validate().is_err());
        let r = RoomSpec { px_w: 0, ..room() };
        assert!(r.validate().is_err());
    }

    #[test]
    fn projection_examples() {
        let r = room();
        let p = FloorPoint::new(6.0, 1.0);
        let (pp, c) = project_to_perimeter(p, &r).unwrap();
        assert_eq!(pp.wall, Wall::Front);
        assert_eq!(pp.s, 6.0);
        assert_eq!(c, 1.0);
        assert!((c - brute_force_clearance(p, &r)).abs() < 1e-3);

        let (pp, c) = project_to_perimeter(FloorPoint::new(0.0, 0.0), &r).unwrap();
        assert_eq!((pp.s, c), (0.0, 0.0));

        let p = FloorPoint::new(6.0, 5.0);
        let (_, c) = project_to_perimeter(p, &r).unwrap();
        assert_eq!(c, 5.0);
        assert!((brute_force_clearance(p, &r) - 5.0).abs() < 1e-3);
        let a = update_activation(ActivationState::default(), c, &r);
        assert!(!a.active);
    }

    #[test]
    fn projection_rejects_bad_input() {
        let r = room();
        assert!(matches!(
            project_to_perimeter(FloorPoint::new(f64::NAN, 1.0), &r),
            Err(SpatialError::NonFinite { .. })
        ));
        assert!(matches!(
            project_to_perimeter(FloorPoint::new(13.0, 1.0), &r),
            Err(SpatialError::OutsideRoom { .. })
        ));
    }

    #[test]
    fn corner_ties_take_smaller_arc() {
        let r = room();
        // Equidistant from Front (s = 1) and Left (s = 43).
        let (pp, _) = project_to_perimeter(FloorPoint::new(1.0, 1.0), &r).unwrap();
        assert_eq!(pp.wall, Wall::Front);
        assert_eq!(pp.s, 1.0);
        // Equidistant from Right (s = 21) and Back (s = 23).
        let (pp, _) = project_to_perimeter(FloorPoint::new(11.0, 9.0), &r).unwrap();
        assert_eq!(pp.wall, Wall::Right);
        assert_eq!(pp.s, 21.0);
    }

    #[test]
    fn wall_and_t_agree_with_s() {
        let r = room();
        for (s, wall, t) in [
            (0.0, Wall::Front, 0.0),
            (12.0, Wall::Right, 0.0),
            (17.0, Wall::Right, 5.0),
            (22.0, Wall::Back, 0.0),
            (34.0, Wall::Left, 0.0),
            (43.5, Wall::Left, 9.5),
        ] {
            let pp = PerimeterPoint::at(s, &r).unwrap();
            assert_eq!(pp.wall, wall, "s={s}");
            assert!((pp.t - t).abs() < 1e-12);
        }
        assert!(PerimeterPoint::at(44.0, &r).is_err());
    }

    #[test]
    fn seeded_points_match_brute_force() {
        let r = room();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = FloorPoint::new(rng.random_range(0.0..12.0), rng.random_range(0.0..10.0));
            let (pp, c) = project_to_perimeter(p, &r).unwrap();
            assert!((c - brute_force_clearance(p, &r)).abs() <= 1e-3);
            // The returned foot really is at that distance.
            let foot = match pp.wall {
                Wall::Front => FloorPoint::new(pp.t, 0.0),
                Wall::Right => FloorPoint::new(r.width_m, pp.t),
                Wall::Back => FloorPoint::new(r.width_m - pp.t, r.depth_m),
                Wall::Left => FloorPoint::new(0.0, r.depth_m - pp.t),
            };
            assert!((p.distance(foot) - c).abs() < 1e-9);
        }
    }

    #[test]
    fn pixel_map_examples() {
        let r = room();
        assert_eq!(arc_to_pixel(0.0, &r).unwrap(), 0);
        assert_eq!(arc_to_pixel(22.0, &r).unwrap(), 7250);
        assert_eq!(arc_to_pixel(6.0, &r).unwrap(), 1977);
        assert!(arc_to_pixel(44.0, &r).is_err());
        assert!(arc_to_pixel(-0.1, &r).is_err());

        let s0 = pixel_to_arc(0, &r).unwrap();
        assert!((s0 - 0.5 * 44.0 / 14500.0).abs() < 1e-12);
        assert!((s0 - 0.0015172).abs() < 1e-7);
        assert!(pixel_to_arc(14499, &r).unwrap() < 44.0);
        assert!(pixel_to_arc(14500, &r).is_err());
        assert!(pixel_to_arc(-1, &r).is_err());
        for u in [0, 7249, 14499] {
            assert_eq!(arc_to_pixel(pixel_to_arc(u, &r).unwrap(), &r).unwrap() as i64, u);
        }
    }

    #[test]
    fn activation_examples() {
        let r = room();
        let inactive = ActivationState::default();
        assert!(update_activation(inactive, 1.0, &r).active);
        assert!(!update_activation(inactive, 2.5, &r).active);
        assert!(update_activation(inactive, 2.0, &r).active);
        let active = ActivationState { active: true, last_clearance_m: 1.0 };
        assert!(update_activation(active, 2.1, &r).active);
        assert!(update_activation(active, 2.2, &r).active);
        assert!(!update_activation(active, 2.2001, &r).active);
    }

    #[test]
    fn column_examples() {
        let r = room();
        let right = |t: f64| PerimeterPoint::at(r.wall_start(Wall::Right) + t, &r).unwrap();
        let a = column_index(&right(0.0), &r);
        assert_eq!((a.region, a.column), (Region::RightSide, Some(0)));
        assert_eq!(column_index(&right(5.0), &r).column, Some(4));
        assert_eq!(column_index(&right(9.999), &r).column, Some(8));
        let front = PerimeterPoint::at(3.0, &r).unwrap();
        assert_eq!(column_index(&front, &r).region, Region::FrontShared);
        let back = PerimeterPoint::at(25.0, &r).unwrap();
        assert_eq!(column_index(&back, &r).region, Region::BackInactive);
    }

    #[test]
    fn anchor_examples() {
        let r = room();
        let a = feedback_anchor(FloorPoint::new(6.0, 1.0), &r).unwrap();
        assert_eq!(a, ScreenPixel { u: 1977, v: 1199 });
        let a = feedback_anchor(FloorPoint::new(0.0, 0.0), &r).unwrap();
        assert_eq!(a, ScreenPixel { u: 0, v: 1199 });
        let b = feedback_anchor(FloorPoint::new(6.01, 1.0), &r).unwrap();
        assert!(b.u - 1977 <= 4);
    }

    #[test]
    fn dead_band_holds_column_near_boundary() {
        let r = room();
        let at = |t: f64| PerimeterPoint::at(r.wall_start(Wall::Right) + t, &r).unwrap();
        let mut tracker = ColumnTracker::default();
        let boundary = r.column_width_m();
        assert!(tracker.update(&at(0.5), &r).is_some());
        assert!(tracker.update(&at(boundary + 0.05), &r).is_none());
        assert_eq!(tracker.current().unwrap().column, Some(0));
        let (from, to) = tracker.update(&at(boundary + 0.1), &r).unwrap();
        assert_eq!(from.unwrap().column, Some(0));
        assert_eq!(to.column, Some(1));
        // Coming back needs the same margin on the other side.
        assert!(tracker.update(&at(boundary - 0.05), &r).is_none());
    }

    #[test]
    fn circular_gap_wraps() {
        assert!((circular_gap(43.9, 0.0, 12.0, 44.0) - 0.1).abs() < 1e-9);
        assert_eq!(circular_gap(5.0, 0.0, 12.0, 44.0), 0.0);
    }

    #[test]
    fn span_pixels_cover_column() {
        let r = room();
        let c = ColumnAssignment { region: Region::RightSide, column: Some(0) };
        let (lo, hi) = c.arc_span(&r);
        let (a, b) = arc_span_pixels(lo, hi, &r);
        assert_eq!(a, arc_to_pixel(12.0, &r).unwrap());
        assert!(b > a);
        assert!(b < arc_to_pixel(hi, &r).unwrap());
    }
}
