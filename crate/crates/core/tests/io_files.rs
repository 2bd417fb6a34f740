use std::fs;

use segclust::bench::Algorithm;
use segclust::image::LabelMap;
use segclust::io::{
    read_image, read_mask, read_records_json, write_image, write_labelmap, write_mask,
    write_records, ReportFormat, RunRecord,
};
use segclust::kmeans::KMeansConfig;
use segclust::metrics::EvalReport;
use segclust::model::ModelConfig;
use segclust::phantom::{phantom_suite, Difficulty};
use segclust::Error;

#[test]
fn phantom_round_trip_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    for (i, p) in phantom_suite(2, Difficulty::Blurred, 61)
        .unwrap()
        .iter()
        .enumerate()
    {
        for ext in ["pgm", "png"] {
            let path = dir.path().join(format!("img{i}.{ext}"));
            write_image(&p.image, &path).unwrap();
            let back = read_image(&path).unwrap();
            assert_eq!(
                (back.width(), back.height()),
                (p.image.width(), p.image.height())
            );
            for (a, b) in p.image.pixels().iter().zip(back.pixels()) {
                assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            }
            let mpath = dir.path().join(format!("mask{i}.{ext}"));
            write_mask(&p.truth, &mpath).unwrap();
            assert_eq!(read_mask(&mpath).unwrap(), p.truth);
        }
    }
}

#[test]
fn eight_bit_pixel_51() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.pgm");
    let mut bytes = b"P5\n# hand made\n2 1\n255\n".to_vec();
    bytes.extend([51u8, 255]);
    fs::write(&path, bytes).unwrap();
    let img = read_image(&path).unwrap();
    assert_eq!(img.pixels(), &[0.2, 1.0]);
}

#[test]
fn label_images_use_spread_gray_levels() {
    let dir = tempfile::tempdir().unwrap();
    let labels = LabelMap::new(3, 1, 3, vec![0, 1, 2]).unwrap();
    let path = dir.path().join("l.png");
    write_labelmap(&labels, &path).unwrap();
    let img = read_image(&path).unwrap();
    assert_eq!(img.pixels(), &[0.0, 128.0 / 255.0, 1.0]);
}

#[test]
fn unknown_extension_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let img = phantom_suite(1, Difficulty::Sharp, 1)
        .unwrap()
        .remove(0)
        .image;
    assert!(matches!(
        write_image(&img, dir.path().join("x.bmp")),
        Err(Error::UnsupportedFormat(_))
    ));
    assert!(matches!(
        read_image(dir.path().join("none.pgm")),
        Err(Error::NotFound(_))
    ));
    fs::write(dir.path().join("junk.pgm"), b"hello").unwrap();
    assert!(read_image(dir.path().join("junk.pgm")).is_err());
}

#[test]
fn records_json_round_trip() {
    let report = EvalReport {
        dice: 0.1 + 0.2,
        matched_cluster: 2,
        compactness: 1.0 / 3.0,
        separation: None,
        wall_time_s: 0.125,
        iterations: 7,
    };
    let records = vec![RunRecord::new(
        "a,b",
        ModelConfig::KMeans(KMeansConfig::default()),
        &report,
    )];
    assert_eq!(records[0].algorithm, Algorithm::KMeans);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_records(&records, &path, ReportFormat::Json).unwrap();
    let back = read_records_json(&path).unwrap();
    assert_eq!(back, records);

    let csv = dir.path().join("r.csv");
    write_records(&records, &csv, ReportFormat::Csv).unwrap();
    let text = fs::read_to_string(csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("kmeans,\"a,b\",0.30000000000000004,"));
    assert!(write_records(&[], dir.path().join("e.csv"), ReportFormat::Csv).is_err());
}
