//! Greedy NMS and AP@0.5 with its precision/recall curve.

use forkfuse::head::{nms, AxisBox, Detection};
use forkfuse::train::average_precision;

pub fn run() -> forkfuse::Result<()> {
    let boxes = [
        AxisBox::new(10.0, 10.0, 50.0, 50.0)?,
        AxisBox::new(12.0, 11.0, 52.0, 49.0)?,
        AxisBox::new(100.0, 100.0, 140.0, 130.0)?,
    ];
    let scores = [0.9, 0.8, 0.7];
    let keep = nms(&boxes, &scores, 0.7, 100);
    println!("kept {keep:?} of 3 (the near-duplicate is suppressed)");

    let dets: Vec<Detection> = keep.iter().map(|&i| Detection { bbox: boxes[i], score: scores[i] }).collect();
    let frames = vec![dets, vec![Detection { bbox: AxisBox::new(0.0, 0.0, 20.0, 20.0)?, score: 0.95 }]];
    let gts = vec![
        vec![AxisBox::new(10.0, 10.0, 50.0, 50.0)?, AxisBox::new(98.0, 100.0, 140.0, 132.0)?],
        vec![AxisBox::new(60.0, 60.0, 90.0, 90.0)?],
    ];
    let r = average_precision(&frames, &gts, 0.5);
    print!("{}", r.summary());
    print!("{}", r.curve_csv());
    Ok(())
}

#[allow(dead_code)]
fn main() -> forkfuse::Result<()> {
    run()
}
