//! Oriented-box geometry: convex hull, minimum-area rectangle, IoU/GIoU,
//! rotated NMS and the OBB text format.

use equikit::geometry::{convex_hull, format_obb, giou, min_area_rect, polygon_iou, rotated_nms, ObbRecord, OrientedBox, Point};
use std::f64::consts::FRAC_PI_6;

fn main() -> equikit::Result<()> {
    let points: Vec<Point> = [(0.0, 0.0), (4.0, 1.0), (5.0, 4.0), (1.0, 3.0), (2.0, 2.0), (3.0, 1.5)]
        .iter()
        .map(|&(x, y)| Point::new(x, y))
        .collect();
    let hull = convex_hull(&points)?;
    let rect = min_area_rect(&hull)?;
    let (w, h, angle) = rect.size_and_angle();
    println!("hull: {} vertices, area {:.3}", hull.len(), hull.area());
    println!(
        "min-area rect: {w:.3} x {h:.3} at {:.1}°, area {:.3}",
        angle.to_degrees(),
        rect.area()
    );

    let a = OrientedBox::from_center(0.0, 0.0, 6.0, 2.0, 0.0);
    let b = OrientedBox::from_center(1.0, 0.5, 6.0, 2.0, FRAC_PI_6);
    let (pa, pb) = (a.to_polygon()?, b.to_polygon()?);
    println!("IoU {:.4}, GIoU {:.4}", polygon_iou(&pa, &pb)?, giou(&pa, &pb)?);

    let boxes = [a, b, OrientedBox::from_center(20.0, 0.0, 4.0, 4.0, 0.0)];
    let scores = [0.9, 0.8, 0.7];
    let keep = rotated_nms(&boxes, &scores, 0.3)?;
    println!("NMS keeps {keep:?}");

    let records: Vec<ObbRecord> = keep
        .iter()
        .map(|&i| ObbRecord {
            bbox: boxes[i],
            class: 0,
            score: Some(scores[i]),
        })
        .collect();
    print!("{}", format_obb(&records));
    Ok(())
}
