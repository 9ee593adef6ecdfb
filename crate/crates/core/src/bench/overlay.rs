use std::path::Path;

use image::{Rgb, RgbImage};

use super::report::hit;
use super::task::GroundingTask;
use crate::agents::Screen;
use crate::geometry::{partition_grid, BoxClosed, GridSpec, PointPx, RectPx};
use crate::pipeline::{GroundingResult, Verdict};

const GRID: Rgb<u8> = Rgb([90, 90, 90]);
const EXPLORED: Rgb<u8> = Rgb([0, 160, 220]);
const ACCEPTED: Rgb<u8> = Rgb([255, 150, 0]);
const REJECTED: Rgb<u8> = Rgb([170, 0, 170]);
const TRUTH: Rgb<u8> = Rgb([0, 200, 0]);
const HIT: Rgb<u8> = Rgb([0, 230, 60]);
const MISS: Rgb<u8> = Rgb([230, 0, 0]);

/// Point color: green for a hit, red for a miss.
pub fn point_color(p: PointPx, gt: &BoxClosed) -> Rgb<u8> {
    if hit(p, gt) == 1 {
        HIT
    } else {
        MISS
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn outline(img: &mut RgbImage, r: RectPx, c: Rgb<u8>, thickness: i64) {
    for t in 0..thickness {
        for x in r.x1()..r.x2() {
            put(img, x, r.y1() + t, c);
            put(img, x, r.y2() - 1 - t, c);
        }
        for y in r.y1()..r.y2() {
            put(img, r.x1() + t, y, c);
            put(img, r.x2() - 1 - t, y, c);
        }
    }
}

fn cross(img: &mut RgbImage, p: PointPx, c: Rgb<u8>, arm: i64) {
    for d in -arm..=arm {
        for w in -1..=1 {
            put(img, p.x + d, p.y + w, c);
            put(img, p.x + w, p.y + d, c);
        }
    }
}

/// Full screenshot with the stage-1 grid, explored regions, candidate
/// crops, the ground-truth box and the final point drawn on top.
pub fn draw_overlay(screen: &dyn Screen, task: &GroundingTask, result: &GroundingResult) -> RgbImage {
    let full = screen.size().rect();
    let mut img = screen.render(full);
    let scale = (full.width().max(full.height()) / 1000).max(1);
    if let Ok(tiles) = partition_grid(full, GridSpec::THREE_BY_THREE) {
        for t in tiles {
            outline(&mut img, t, GRID, scale);
        }
    }
    for n in &result.explored {
        outline(&mut img, n.rect, EXPLORED, scale);
    }
    for c in &result.candidates {
        let color = if c.verdict == Verdict::Accepted { ACCEPTED } else { REJECTED };
        outline(&mut img, c.crop, color, scale);
    }
    outline(&mut img, task.gt_bbox.to_rect(), TRUTH, scale);
    cross(&mut img, result.final_point, point_color(result.final_point, &task.gt_bbox), 12 * scale);
    img
}

pub fn save_overlay(
    path: &Path,
    screen: &dyn Screen,
    task: &GroundingTask,
    result: &GroundingResult,
) -> Result<(), image::ImageError> {
    draw_overlay(screen, task, result).save(path)
}
