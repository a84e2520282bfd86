use super::{FeatureError, Result};

/// Normalized center-format box: all four fields are fractions of the frame
/// width (cx, w) or height (cy, h).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Checked constructor: positive size, finite, intersecting the unit square.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(FeatureError::InvalidBox(format!("({cx}, {cy}, {w}, {h})")))
        }
    }

    pub fn is_valid(&self) -> bool {
        let finite = [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite());
        finite
            && self.w > 0.0
            && self.h > 0.0
            && self.x1() > 0.0
            && self.x0() < 1.0
            && self.y1() > 0.0
            && self.y0() < 1.0
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
        }
    }

    /// Converts a top-left pixel box to normalized center format.
    pub fn from_pixels_tlwh(x: f64, y: f64, w: f64, h: f64, width: f64, height: f64) -> Self {
        Self {
            cx: (x + w / 2.0) / width,
            cy: (y + h / 2.0) / height,
            w: w / width,
            h: h / height,
        }
    }

    /// Top-left pixel form (x, y, w, h).
    pub fn to_pixels_tlwh(&self, width: f64, height: f64) -> (f64, f64, f64, f64) {
        (
            self.x0() * width,
            self.y0() * height,
            self.w * width,
            self.h * height,
        )
    }

    pub fn x0(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn x1(&self) -> f64 {
        self.cx + self.w / 2.0
    }

    pub fn y0(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn y1(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, o: &BoundingBox) -> f64 {
        let iw = (self.x1().min(o.x1()) - self.x0().max(o.x0())).max(0.0);
        let ih = (self.y1().min(o.y1()) - self.y0().max(o.y0())).max(0.0);
        iw * ih
    }

    /// Intersection over union.
    pub fn iou(&self, o: &BoundingBox) -> f64 {
        let inter = self.intersection_area(o);
        let union = self.area() + o.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Part of the box inside the unit square, or `None` when nothing remains.
    pub fn clip_to_unit(&self) -> Option<BoundingBox> {
        if self.x0() >= 0.0 && self.y0() >= 0.0 && self.x1() <= 1.0 && self.y1() <= 1.0 {
            return Some(*self);
        }
        let x0 = self.x0().max(0.0);
        let y0 = self.y0().max(0.0);
        let x1 = self.x1().min(1.0);
        let y1 = self.y1().min(1.0);
        (x1 > x0 && y1 > y0).then(|| BoundingBox::from_corners(x0, y0, x1, y1))
    }
}

/// One frame of one proposal's track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub frame: usize,
    pub bbox: BoundingBox,
    pub objectness: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a point. Frames must increase; an inactive point freezes the
    /// last active box.
    pub fn push(&mut self, mut p: TrackPoint) -> Result<()> {
        if let Some(last) = self.points.last() {
            if p.frame <= last.frame {
                return Err(FeatureError::InvalidBox(format!(
                    "frame {} does not follow frame {}",
                    p.frame, last.frame
                )));
            }
            if !p.active {
                if let Some(prev) = self.points.iter().rev().find(|q| q.active) {
                    p.bbox = prev.bbox;
                }
            }
        }
        self.points.push(p);
        Ok(())
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&TrackPoint> {
        self.points.get(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validity() {
        assert!(BoundingBox::new(0.5, 0.5, 0.2, 0.2).is_ok());
        assert!(BoundingBox::new(0.5, 0.5, 0.0, 0.2).is_err());
        assert!(BoundingBox::new(1.5, 0.5, 0.2, 0.2).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.5, 0.2, 0.2).is_err());
    }

    #[test]
    fn iou_corner_example() {
        let a = BoundingBox::from_corners(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::from_corners(5.0, 0.0, 15.0, 10.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inactive_points_freeze_box() {
        let mut t = Trajectory::new();
        let b0 = BoundingBox::new(0.5, 0.5, 0.2, 0.2).unwrap();
        let b1 = BoundingBox::new(0.6, 0.5, 0.2, 0.2).unwrap();
        t.push(TrackPoint { frame: 0, bbox: b0, objectness: 1.0, active: true }).unwrap();
        t.push(TrackPoint { frame: 1, bbox: b1, objectness: 0.1, active: false }).unwrap();
        assert_eq!(t.points()[1].bbox, b0);
        assert!(t.push(TrackPoint { frame: 1, bbox: b1, objectness: 1.0, active: true }).is_err());
    }
}
