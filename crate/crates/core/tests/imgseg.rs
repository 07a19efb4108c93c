mod common;

use diagsdp::imgseg::*;
use diagsdp::*;

#[test]
fn two_block_cuts_exactly_the_boundary() {
    let img = two_block(16, 16);
    let seg = segment(&img, &SegmentOptions::default()).unwrap();
    assert_eq!(seg.matrix.n(), 256);
    assert_eq!(seg.matrix.nnz(), 16);
    assert_eq!(seg.cut_value, 16.0 * 255.0);
    let mask = seg.mask();
    assert!(mask.iter().all(|&x| x == 0 || x == 255));
    for r in 0..16 {
        assert_ne!(mask[r * 16 + 7], mask[r * 16 + 8]);
    }
}

#[test]
fn small_images_match_brute_force() {
    for img in [
        two_block(16, 16).resize(4, 4),
        checkerboard(4, 4),
        gradient(4, 4),
    ] {
        let opts = SegmentOptions {
            agents: 2,
            threshold: 30.0,
            ..Default::default()
        };
        let seg = segment(&img, &opts).unwrap();
        let (best, _) = brute_force_maxcut(&seg.matrix).unwrap();
        assert_eq!(seg.cut_value, best);
    }
}

#[test]
fn checkerboard_cuts_every_edge() {
    let img = checkerboard(8, 8);
    let seg = segment(&img, &SegmentOptions::default()).unwrap();
    assert_eq!(seg.matrix.nnz(), 112);
    let total: f64 = seg.matrix.entries().iter().map(|e| e.weight).sum();
    assert_eq!(seg.cut_value, total);
}

#[test]
fn uniform_image_has_no_edges() {
    let img = Image::from_fn(5, 4, |_, _| [40, 50, 60]);
    let seg = segment(&img, &SegmentOptions::default()).unwrap();
    assert_eq!(seg.cut_value, 0.0);
    assert!(seg.run.converged);
    assert_eq!(seg.mask().len(), 20);
}

#[test]
fn strips_form_a_path() {
    let img = two_block(16, 16);
    let m = build_weights(&img, 100.0).unwrap();
    let part = strip_partition(&img, &m, 4).unwrap();
    for k in 1..4 {
        assert_eq!(part.parent(k), Some(k - 1));
        assert_eq!(part.coupling(k).len(), 16);
    }
    assert_eq!(part.shared_count(), 48);
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = gradient(7, 3);
    let ascii = dir.path().join("a.ppm");
    let binary = dir.path().join("b.ppm");
    std::fs::write(&ascii, img.to_ppm_ascii()).unwrap();
    std::fs::write(&binary, img.to_ppm_binary()).unwrap();
    assert_eq!(load_image(&ascii).unwrap(), img);
    assert_eq!(load_image(&binary).unwrap(), img);
}

#[test]
fn segmentation_is_deterministic() {
    let img = two_block(8, 8);
    let opts = SegmentOptions {
        max_iters: 500,
        seed: 5,
        ..Default::default()
    };
    let a = segment(&img, &opts).unwrap();
    let b = segment(&img, &opts).unwrap();
    assert_eq!(a.mask(), b.mask());
    assert_eq!(
        a.run.trace.to_csv_string().unwrap(),
        b.run.trace.to_csv_string().unwrap()
    );
}
