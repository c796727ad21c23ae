//! Planar geometry and the single-intersection road network.
//!
//! Two perpendicular two-lane roads cross at the scenario center. Every
//! vehicle drives straight through, so each approach direction defines a
//! straight route: approach lane, junction, exit lane. Positions along a
//! route are front-bumper arc lengths measured from the approach start.

use std::fmt;
use std::str::FromStr;

use crate::config::SimConfig;
use crate::error::GeometryError;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Side of the intersection an approach comes from. Traffic from `N`
/// heads south, and so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    N,
    S,
    E,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::S, Direction::E, Direction::W];

    pub fn index(self) -> usize {
        match self {
            Direction::N => 0,
            Direction::S => 1,
            Direction::E => 2,
            Direction::W => 3,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::N => Direction::S,
            Direction::S => Direction::N,
            Direction::E => Direction::W,
            Direction::W => Direction::E,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Direction::N | Direction::S => Axis::NorthSouth,
            Direction::E | Direction::W => Axis::EastWest,
        }
    }

    /// Unit travel vector of traffic arriving from this side.
    pub fn heading(self) -> (f64, f64) {
        match self {
            Direction::N => (0.0, -1.0),
            Direction::S => (0.0, 1.0),
            Direction::E => (-1.0, 0.0),
            Direction::W => (1.0, 0.0),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::N => "N",
            Direction::S => "S",
            Direction::E => "E",
            Direction::W => "W",
        })
    }
}

impl FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "N" => Ok(Direction::N),
            "S" => Ok(Direction::S),
            "E" => Ok(Direction::E),
            "W" => Ok(Direction::W),
            other => Err(format!("expected N|S|E|W, got `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::NorthSouth => Axis::EastWest,
            Axis::EastWest => Axis::NorthSouth,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaneRole {
    Approach,
    Exit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaneSegment {
    pub id: u32,
    pub start: Point,
    pub end: Point,
    pub width: f64,
    /// Approach whose traffic uses this lane.
    pub approach_direction: Direction,
    pub role: LaneRole,
    /// Stop-line offset from `start`; equals the length for approach lanes
    /// and 0 for exit lanes, which have no stop line.
    pub stop_line_s: f64,
}

impl LaneSegment {
    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }
}

/// Point at arc length `s` along a straight lane.
pub fn lane_point(lane: &LaneSegment, s: f64) -> Result<Point, GeometryError> {
    let length = lane.length();
    if !(0.0..=length).contains(&s) {
        return Err(GeometryError::OutOfLane { s, length });
    }
    if s == length {
        return Ok(lane.end);
    }
    let f = s / length;
    Ok(Point::new(
        lane.start.x + (lane.end.x - lane.start.x) * f,
        lane.start.y + (lane.end.y - lane.start.y) * f,
    ))
}

/// Axis-aligned junction box. Membership is boundary inclusive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YellowBox {
    pub center: Point,
    pub half_width: f64,
    pub half_height: f64,
}

pub fn point_in_box(p: Point, b: &YellowBox) -> bool {
    (p.x - b.center.x).abs() <= b.half_width && (p.y - b.center.y).abs() <= b.half_height
}

/// Straight path of one approach direction through the junction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Route {
    pub direction: Direction,
    pub origin: Point,
    pub heading: (f64, f64),
    pub stop_line_s: f64,
    pub box_start_s: f64,
    pub box_end_s: f64,
    /// Where the exit lane begins (the far stop-line position).
    pub exit_start_s: f64,
    pub length: f64,
}

impl Route {
    pub fn point_at(&self, s: f64) -> Point {
        Point::new(self.origin.x + self.heading.0 * s, self.origin.y + self.heading.1 * s)
    }

    /// Whether the footprint `[front - length, front]` overlaps the box span.
    pub fn footprint_in_box(&self, front: f64, length: f64) -> bool {
        front >= self.box_start_s && front - length <= self.box_end_s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub yellow_box: YellowBox,
    /// Signal heads, one per approach at its stop line (road centerline),
    /// indexed by [`Direction::index`].
    pub signal_positions: Vec<Point>,
    /// One RSU per approach, co-located with the signal head.
    pub rsu_positions: Vec<Point>,
    pub tcu_position: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoadNetwork {
    pub lanes: Vec<LaneSegment>,
    pub intersection: Intersection,
    routes: [Route; 4],
    width: f64,
    height: f64,
}

impl RoadNetwork {
    pub fn route(&self, d: Direction) -> &Route {
        &self.routes[d.index()]
    }

    pub fn approach_lane(&self, d: Direction) -> &LaneSegment {
        &self.lanes[d.index() * 2]
    }

    pub fn exit_lane(&self, d: Direction) -> &LaneSegment {
        &self.lanes[d.index() * 2 + 1]
    }

    pub fn yellow_box(&self) -> &YellowBox {
        &self.intersection.yellow_box
    }

    pub fn rsu_position(&self, d: Direction) -> Point {
        self.intersection.rsu_positions[d.index()]
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }
}

/// Builds the single cross intersection at the scenario center.
pub fn build_cross_network(cfg: &SimConfig) -> Result<RoadNetwork, GeometryError> {
    let (w, h) = (cfg.scenario_width, cfg.scenario_height);
    let spacing = cfg.signal_spacing;
    let box_half = spacing / 2.0 - cfg.stop_setback;
    if spacing >= w.min(h) || box_half <= 0.0 {
        return Err(GeometryError::SpacingTooLarge { spacing, width: w, height: h });
    }
    let center = Point::new(w / 2.0, h / 2.0);
    let half_lane = cfg.lane_width / 2.0;

    let mut lanes = Vec::with_capacity(8);
    let mut signal_positions = Vec::with_capacity(4);
    let routes = Direction::ALL.map(|d| {
        let (hx, hy) = d.heading();
        let half_extent = match d.axis() {
            Axis::NorthSouth => h / 2.0,
            Axis::EastWest => w / 2.0,
        };
        // Right-hand traffic: the lane sits to the right of the centerline.
        let (rx, ry) = (hy * half_lane, -hx * half_lane);
        let origin = Point::new(center.x - hx * half_extent + rx, center.y - hy * half_extent + ry);
        let approach_len = half_extent - spacing / 2.0;
        let route = Route {
            direction: d,
            origin,
            heading: (hx, hy),
            stop_line_s: approach_len,
            box_start_s: approach_len + cfg.stop_setback,
            box_end_s: approach_len + spacing - cfg.stop_setback,
            exit_start_s: approach_len + spacing,
            length: 2.0 * half_extent,
        };
        let id = d.index() as u32 * 2;
        lanes.push(LaneSegment {
            id,
            start: origin,
            end: route.point_at(route.stop_line_s),
            width: cfg.lane_width,
            approach_direction: d,
            role: LaneRole::Approach,
            stop_line_s: approach_len,
        });
        lanes.push(LaneSegment {
            id: id + 1,
            start: route.point_at(route.exit_start_s),
            end: route.point_at(route.length),
            width: cfg.lane_width,
            approach_direction: d,
            role: LaneRole::Exit,
            stop_line_s: 0.0,
        });
        signal_positions.push(Point::new(
            center.x - hx * spacing / 2.0,
            center.y - hy * spacing / 2.0,
        ));
        route
    });

    Ok(RoadNetwork {
        lanes,
        intersection: Intersection {
            yellow_box: YellowBox { center, half_width: box_half, half_height: box_half },
            rsu_positions: signal_positions.clone(),
            signal_positions,
            tcu_position: center,
        },
        routes,
        width: w,
        height: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_net() -> RoadNetwork {
        build_cross_network(&SimConfig::default()).unwrap()
    }

    #[test]
    fn default_network_shape() {
        let net = default_net();
        let b = net.yellow_box();
        assert_eq!(b.center, Point::new(400.0, 400.0));
        assert_eq!(b.half_width * 2.0, 48.0);
        assert_eq!(net.lanes.len(), 8);
        assert_eq!(net.intersection.rsu_positions.len(), 4);
        assert_eq!(net.intersection.tcu_position, b.center);
        for d in Direction::ALL {
            let a = net.intersection.signal_positions[d.index()];
            let o = net.intersection.signal_positions[d.opposite().index()];
            assert_eq!(a.distance(o), 50.0);
            let lane = net.approach_lane(d);
            assert_eq!(lane.role, LaneRole::Approach);
            assert_eq!(lane.length(), 375.0);
            assert_eq!(lane.stop_line_s, lane.length());
        }
    }

    #[test]
    fn small_scenario_has_short_approaches() {
        let cfg = SimConfig {
            scenario_width: 100.0,
            scenario_height: 100.0,
            ..SimConfig::default()
        };
        let net = build_cross_network(&cfg).unwrap();
        for d in Direction::ALL {
            assert_eq!(net.approach_lane(d).length(), 25.0);
            assert_eq!(net.exit_lane(d).length(), 25.0);
        }
        assert_eq!(net.yellow_box().center, Point::new(50.0, 50.0));
    }

    #[test]
    fn oversized_spacing_is_rejected() {
        let cfg = SimConfig {
            signal_spacing: 900.0,
            ..SimConfig::default()
        };
        assert!(matches!(build_cross_network(&cfg), Err(GeometryError::SpacingTooLarge { .. })));
    }

    #[test]
    fn lanes_keep_right() {
        let net = default_net();
        let n = net.approach_lane(Direction::N);
        assert_eq!(n.start, Point::new(398.25, 800.0));
        assert_eq!(n.end, Point::new(398.25, 425.0));
        let e = net.exit_lane(Direction::E);
        assert_eq!(e.start, Point::new(375.0, 401.75));
        assert_eq!(e.end, Point::new(0.0, 401.75));
    }

    #[test]
    fn box_membership() {
        let b = *default_net().yellow_box();
        assert!(point_in_box(b.center, &b));
        assert!(point_in_box(Point::new(424.0, 400.0), &b));
        assert!(point_in_box(Point::new(376.0, 424.0), &b));
        assert!(!point_in_box(Point::new(0.0, 0.0), &b));
        assert!(!point_in_box(Point::new(424.0001, 400.0), &b));
    }

    #[test]
    fn lane_point_endpoints_and_midpoint() {
        let net = default_net();
        let lane = net.approach_lane(Direction::W);
        let len = lane.length();
        assert_eq!(lane_point(lane, 0.0).unwrap(), lane.start);
        assert_eq!(lane_point(lane, len).unwrap(), lane.end);
        let mid = lane_point(lane, len / 2.0).unwrap();
        assert_eq!(mid, Point::new((lane.start.x + lane.end.x) / 2.0, (lane.start.y + lane.end.y) / 2.0));
        assert!(matches!(lane_point(lane, len + 0.1), Err(GeometryError::OutOfLane { .. })));
        assert!(matches!(lane_point(lane, -0.1), Err(GeometryError::OutOfLane { .. })));
    }

    #[test]
    fn every_rsu_sees_the_box() {
        let cfg = SimConfig::default();
        let net = default_net();
        let b = net.yellow_box();
        for p in &net.intersection.rsu_positions {
            let nearest = Point::new(
                p.x.clamp(b.center.x - b.half_width, b.center.x + b.half_width),
                p.y.clamp(b.center.y - b.half_height, b.center.y + b.half_height),
            );
            assert!(p.distance(nearest) <= cfg.sensor_range);
        }
    }

    #[test]
    fn route_box_span_matches_box_geometry() {
        let net = default_net();
        let b = *net.yellow_box();
        for d in Direction::ALL {
            let r = net.route(d);
            assert!(point_in_box(r.point_at(r.box_start_s), &b));
            assert!(point_in_box(r.point_at(r.box_end_s), &b));
            assert!(!point_in_box(r.point_at(r.box_start_s - 1e-6), &b));
            assert!(!point_in_box(r.point_at(r.stop_line_s), &b));
            assert!(net.in_bounds(r.point_at(0.0)));
            assert!(net.in_bounds(r.point_at(r.length)));
        }
    }

    proptest! {
        #[test]
        fn opposing_stop_lines_are_spacing_apart(
            w in 60.0f64..2000.0, h in 60.0f64..2000.0, frac in 0.05f64..0.95,
        ) {
            let spacing = (w.min(h) * frac).max(3.0);
            let cfg = SimConfig { scenario_width: w, scenario_height: h, signal_spacing: spacing, ..SimConfig::default() };
            let net = build_cross_network(&cfg).unwrap();
            for d in [Direction::N, Direction::E] {
                let a = net.intersection.signal_positions[d.index()];
                let o = net.intersection.signal_positions[d.opposite().index()];
                prop_assert!((a.distance(o) - spacing).abs() < 1e-9);
            }
        }

        #[test]
        fn box_membership_is_point_symmetric(dx in -60.0f64..60.0, dy in -60.0f64..60.0) {
            let b = *default_net().yellow_box();
            let plus = Point::new(b.center.x + dx, b.center.y + dy);
            let minus = Point::new(b.center.x - dx, b.center.y - dy);
            prop_assert_eq!(point_in_box(plus, &b), point_in_box(minus, &b));
        }
    }
}
