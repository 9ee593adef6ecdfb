// Tiling, crop placement and the frame conversions the pipeline relies on.

use groundscan::geometry::{
    crop_centered, partition_grid, scale_point_down, scale_point_up, to_global, to_local, zone_center, GridSpec,
    ImageSize, PointPx, RectPx, ZoneId,
};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let screen = ImageSize::new(3840, 2160)?;
    let tiles = partition_grid(screen.rect(), GridSpec::THREE_BY_THREE)?;
    for (i, t) in tiles.iter().enumerate() {
        println!("region {}: {:?}", i + 1, t.to_array());
    }

    // Crops near an edge shift inward instead of shrinking.
    let crop = crop_centered(PointPx::new(10, 2150), 125, screen);
    println!("crop at the corner: {:?}", crop.to_array());
    assert_eq!(crop.width(), 125);

    let cell = partition_grid(RectPx::new(0, 0, 625, 625)?, GridSpec::FIVE_BY_FIVE)?[12];
    let p = zone_center(cell, ZoneId::TopRight)?;
    let on_screen = to_global(scale_point_down(p, 5)?, crop)?;
    println!("top-right zone of cell 13 -> {:?} on screen", on_screen);
    assert_eq!(scale_point_up(to_local(on_screen, crop)?, 5)?, scale_point_down(p, 5).and_then(|q| scale_point_up(q, 5))?);
    Ok(())
}

fn main() {
    run_example().unwrap();
}
