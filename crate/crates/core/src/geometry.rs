//! Integer pixel-coordinate algebra.
//!
//! Rectangles tile the plane as `[x1, x2) × [y1, y2)`. All rounding is
//! floor. Nothing here touches pixel data; resampling happens in the image
//! layer of [`crate::agents`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("region too small to partition: {rect} into {grid}")]
    TooSmallToPartition { rect: RectPx, grid: GridSpec },
    #[error("invalid rect [{x1},{y1},{x2},{y2}]: min edge must be below max edge")]
    InvalidRect { x1: i64, y1: i64, x2: i64, y2: i64 },
    #[error("invalid grid {rows}x{cols}: both dimensions must be at least 1")]
    InvalidGrid { rows: u32, cols: u32 },
    #[error("locator point outside crop: {point} not in {crop}")]
    PointOutsideCrop { point: PointPx, crop: RectPx },
    #[error("scale factor must be at least 1")]
    ZeroScale,
    #[error("image size must be at least 1x1")]
    EmptyImage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointPx {
    pub x: i64,
    pub y: i64,
}

impl PointPx {
    pub const fn new(x: i64, y: i64) -> Self {
        Self { x, y }
    }

    pub fn distance_sq(self, other: PointPx) -> i64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl fmt::Display for PointPx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Half-open pixel rectangle `[x1, x2) × [y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct RectPx {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
}

impl RectPx {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Result<Self, GeometryError> {
        if x1 < x2 && y1 < y2 {
            Ok(Self { x1, y1, x2, y2 })
        } else {
            Err(GeometryError::InvalidRect { x1, y1, x2, y2 })
        }
    }

    pub fn from_size(size: ImageSize) -> Self {
        Self {
            x1: 0,
            y1: 0,
            x2: size.width as i64,
            y2: size.height as i64,
        }
    }

    pub fn x1(&self) -> i64 {
        self.x1
    }
    pub fn y1(&self) -> i64 {
        self.y1
    }
    pub fn x2(&self) -> i64 {
        self.x2
    }
    pub fn y2(&self) -> i64 {
        self.y2
    }
    pub fn width(&self) -> i64 {
        self.x2 - self.x1
    }
    pub fn height(&self) -> i64 {
        self.y2 - self.y1
    }
    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn size(&self) -> ImageSize {
        ImageSize {
            width: self.width() as u32,
            height: self.height() as u32,
        }
    }

    pub fn contains(&self, p: PointPx) -> bool {
        p.x >= self.x1 && p.x < self.x2 && p.y >= self.y1 && p.y < self.y2
    }

    pub fn contains_rect(&self, other: &RectPx) -> bool {
        other.x1 >= self.x1 && other.x2 <= self.x2 && other.y1 >= self.y1 && other.y2 <= self.y2
    }

    pub fn intersection(&self, other: &RectPx) -> Option<RectPx> {
        RectPx::new(
            self.x1.max(other.x1),
            self.y1.max(other.y1),
            self.x2.min(other.x2),
            self.y2.min(other.y2),
        )
        .ok()
    }

    /// Floor center, `((x1 + x2 - 1) / 2, (y1 + y2 - 1) / 2)`.
    pub fn center(&self) -> PointPx {
        PointPx::new(
            (self.x1 + self.x2 - 1).div_euclid(2),
            (self.y1 + self.y2 - 1).div_euclid(2),
        )
    }

    /// Nearest point of the rect to `p`.
    pub fn clamp_point(&self, p: PointPx) -> PointPx {
        PointPx::new(p.x.clamp(self.x1, self.x2 - 1), p.y.clamp(self.y1, self.y2 - 1))
    }

    pub fn to_array(self) -> [i64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl TryFrom<[i64; 4]> for RectPx {
    type Error = GeometryError;
    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        RectPx::new(v[0], v[1], v[2], v[3])
    }
}

impl From<RectPx> for [i64; 4] {
    fn from(r: RectPx) -> Self {
        r.to_array()
    }
}

impl fmt::Display for RectPx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.x1, self.y1, self.x2, self.y2)
    }
}

/// Closed box `[x_min, x_max] × [y_min, y_max]`, the convention of
/// ground-truth annotations. Convert explicitly with [`BoxClosed::to_rect`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct BoxClosed {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl BoxClosed {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, GeometryError> {
        if x_min <= x_max && y_min <= y_max {
            Ok(Self {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            Err(GeometryError::InvalidRect {
                x1: x_min,
                y1: y_min,
                x2: x_max,
                y2: y_max,
            })
        }
    }

    pub fn contains(&self, p: PointPx) -> bool {
        self.x_min <= p.x && p.x <= self.x_max && self.y_min <= p.y && p.y <= self.y_max
    }

    pub fn center(&self) -> PointPx {
        PointPx::new(
            (self.x_min + self.x_max).div_euclid(2),
            (self.y_min + self.y_max).div_euclid(2),
        )
    }

    /// The half-open rect covering the same pixels.
    pub fn to_rect(&self) -> RectPx {
        RectPx {
            x1: self.x_min,
            y1: self.y_min,
            x2: self.x_max + 1,
            y2: self.y_max + 1,
        }
    }

    pub fn intersects(&self, rect: &RectPx) -> bool {
        self.to_rect().intersection(rect).is_some()
    }
}

impl TryFrom<[i64; 4]> for BoxClosed {
    type Error = GeometryError;
    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        BoxClosed::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoxClosed> for [i64; 4] {
    fn from(b: BoxClosed) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl fmt::Display for BoxClosed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.x_min, self.x_max, self.y_min, self.y_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

impl ImageSize {
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage);
        }
        Ok(Self { width, height })
    }

    pub fn rect(self) -> RectPx {
        RectPx::from_size(self)
    }
}

impl fmt::Display for ImageSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    rows: u32,
    cols: u32,
}

impl GridSpec {
    pub const THREE_BY_THREE: GridSpec = GridSpec { rows: 3, cols: 3 };
    pub const FIVE_BY_FIVE: GridSpec = GridSpec { rows: 5, cols: 5 };

    pub fn new(rows: u32, cols: u32) -> Result<Self, GeometryError> {
        if rows == 0 || cols == 0 {
            return Err(GeometryError::InvalidGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }
    pub fn cols(&self) -> u32 {
        self.cols
    }
    pub fn cells(&self) -> usize {
        (self.rows * self.cols) as usize
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// One of the nine inner zones of a cell, in reading order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ZoneId {
    TopLeft,
    TopCenter,
    TopRight,
    CenterLeft,
    Center,
    CenterRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl ZoneId {
    pub const ALL: [ZoneId; 9] = [
        ZoneId::TopLeft,
        ZoneId::TopCenter,
        ZoneId::TopRight,
        ZoneId::CenterLeft,
        ZoneId::Center,
        ZoneId::CenterRight,
        ZoneId::BottomLeft,
        ZoneId::BottomCenter,
        ZoneId::BottomRight,
    ];

    /// `(row, col)` in `{0,1,2}²`.
    pub fn row_col(self) -> (u32, u32) {
        let i = self as u32;
        (i / 3, i % 3)
    }

    pub fn from_row_col(row: u32, col: u32) -> Option<ZoneId> {
        if row < 3 && col < 3 {
            Some(Self::ALL[(row * 3 + col) as usize])
        } else {
            None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ZoneId::TopLeft => "top left",
            ZoneId::TopCenter => "top center",
            ZoneId::TopRight => "top right",
            ZoneId::CenterLeft => "center left",
            ZoneId::Center => "center",
            ZoneId::CenterRight => "center right",
            ZoneId::BottomLeft => "bottom left",
            ZoneId::BottomCenter => "bottom center",
            ZoneId::BottomRight => "bottom right",
        }
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ZoneId {
    type Err = String;

    /// Case-insensitive; hyphens, underscores and repeated spaces are
    /// treated as a single space. "middle" is accepted for "center".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_'], " ")
            .replace("centre", "center")
            .replace("middle", "center")
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        ZoneId::ALL
            .into_iter()
            .find(|z| z.label() == norm)
            .ok_or_else(|| format!("unknown zone {s:?}"))
    }
}

impl From<ZoneId> for String {
    fn from(z: ZoneId) -> Self {
        z.label().to_string()
    }
}

impl TryFrom<String> for ZoneId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Splits `len` into `parts` spans whose sizes differ by at most one, the
/// leading spans taking the remainder.
fn spans(start: i64, len: i64, parts: i64) -> impl Iterator<Item = (i64, i64)> {
    let base = len / parts;
    let extra = len % parts;
    let mut cursor = start;
    (0..parts).map(move |i| {
        let size = base + i64::from(i < extra);
        let span = (cursor, cursor + size);
        cursor += size;
        span
    })
}

/// Tiles `rect` into `rows × cols` cells, left-to-right then top-to-bottom.
pub fn partition_grid(rect: RectPx, grid: GridSpec) -> Result<Vec<RectPx>, GeometryError> {
    if rect.width() < grid.cols as i64 || rect.height() < grid.rows as i64 {
        return Err(GeometryError::TooSmallToPartition { rect, grid });
    }
    let cols: Vec<_> = spans(rect.x1, rect.width(), grid.cols as i64).collect();
    let mut tiles = Vec::with_capacity(grid.cells());
    for (y1, y2) in spans(rect.y1, rect.height(), grid.rows as i64) {
        for &(x1, x2) in &cols {
            tiles.push(RectPx { x1, y1, x2, y2 });
        }
    }
    Ok(tiles)
}

pub fn to_global(local: PointPx, crop: RectPx) -> Result<PointPx, GeometryError> {
    if local.x < 0 || local.y < 0 || local.x >= crop.width() || local.y >= crop.height() {
        return Err(GeometryError::PointOutsideCrop { point: local, crop });
    }
    Ok(PointPx::new(crop.x1 + local.x, crop.y1 + local.y))
}

pub fn to_local(global: PointPx, crop: RectPx) -> Result<PointPx, GeometryError> {
    if !crop.contains(global) {
        return Err(GeometryError::PointOutsideCrop { point: global, crop });
    }
    Ok(PointPx::new(global.x - crop.x1, global.y - crop.y1))
}

/// A `side × side` window around `center`, shifted (never shrunk) to stay
/// inside `bounds`. A side larger than an image dimension is clamped to it.
pub fn crop_centered(center: PointPx, side: u32, bounds: ImageSize) -> RectPx {
    fn axis(c: i64, side: i64, extent: i64) -> (i64, i64) {
        let side = side.clamp(1, extent);
        let lo = (c - side / 2).clamp(0, extent - side);
        (lo, lo + side)
    }
    let (x1, x2) = axis(center.x, side as i64, bounds.width as i64);
    let (y1, y2) = axis(center.y, side as i64, bounds.height as i64);
    RectPx { x1, y1, x2, y2 }
}

pub fn scale_rect(rect: RectPx, factor: u32) -> Result<RectPx, GeometryError> {
    if factor == 0 {
        return Err(GeometryError::ZeroScale);
    }
    let f = factor as i64;
    Ok(RectPx {
        x1: rect.x1 * f,
        y1: rect.y1 * f,
        x2: rect.x2 * f,
        y2: rect.y2 * f,
    })
}

pub fn scale_point_up(p: PointPx, factor: u32) -> Result<PointPx, GeometryError> {
    if factor == 0 {
        return Err(GeometryError::ZeroScale);
    }
    Ok(PointPx::new(p.x * factor as i64, p.y * factor as i64))
}

pub fn scale_point_down(p: PointPx, factor: u32) -> Result<PointPx, GeometryError> {
    if factor == 0 {
        return Err(GeometryError::ZeroScale);
    }
    let f = factor as i64;
    Ok(PointPx::new(p.x.div_euclid(f), p.y.div_euclid(f)))
}

/// Center of the named inner zone after a 3×3 split of `cell`.
pub fn zone_center(cell: RectPx, zone: ZoneId) -> Result<PointPx, GeometryError> {
    let tiles = partition_grid(cell, GridSpec::THREE_BY_THREE)?;
    let (row, col) = zone.row_col();
    Ok(tiles[(row * 3 + col) as usize].center())
}

/// Inverse of [`zone_center`]: which zone of `cell` holds `p`.
pub fn zone_of(cell: RectPx, p: PointPx) -> Result<Option<ZoneId>, GeometryError> {
    let tiles = partition_grid(cell, GridSpec::THREE_BY_THREE)?;
    Ok(tiles
        .iter()
        .position(|t| t.contains(p))
        .map(|i| ZoneId::ALL[i]))
}
