use std::path::Path;

use inkline::checkpoint::{font_from_checkpoint, font_to_checkpoint, layout_from_checkpoint, layout_to_checkpoint, Checkpoint};
use inkline::config::{RunConfig, Scale};
use inkline::dataset::{parse_jsonl, read_jsonl, to_jsonl, write_jsonl, DatasetRecord, GlyphRecord};
use inkline::CliError;
use inkline_core::diffusion::{DiffusionConfig, FontModel};
use inkline_core::layout::{LayoutConfig, LayoutModel};
use inkline_core::nn::Tensor;
use proptest::prelude::*;

fn record_strategy() -> impl Strategy<Value = DatasetRecord> {
    let point = (-1e3f64..1e3, -1e3f64..1e3, prop::bool::ANY).prop_map(|(a, b, s)| [a, b, if s { 1.0 } else { -1.0 }]);
    let glyph = (0usize..50, prop::collection::vec(point, 1..20)).prop_map(|(cat, points)| GlyphRecord { cat, points });
    (prop::collection::vec(glyph, 1..6), "[a-z0-9]{1,8}", prop::bool::ANY).prop_map(|(glyphs, writer, with_layout)| {
        let layout = with_layout.then(|| glyphs.iter().enumerate().map(|(i, _)| [1.0, 0.5 + i as f64, 0.1, 0.2]).collect());
        DatasetRecord { writer, glyphs, layout, normalized: false }
    })
}

proptest! {
    #[test]
    fn jsonl_round_trips(records in prop::collection::vec(record_strategy(), 1..5)) {
        let text = to_jsonl(&records);
        let back = parse_jsonl(&text, Path::new("x.jsonl")).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(to_jsonl(&back), text);
    }

    #[test]
    fn f64_metadata_is_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..20)) {
        let mut c = Checkpoint::new();
        c.insert_f64s("meta.values", &values);
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap().f64s("meta.values").unwrap();
        prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn parse_errors_carry_the_line_number() {
    let good = r#"{"writer":"a","glyphs":[{"cat":0,"points":[[0.0,0.0,1.0]]}]}"#;
    let text = format!("{good}\n\n{{not json\n");
    match parse_jsonl(&text, Path::new("d.jsonl")) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let half = r#"{"writer":"a","glyphs":[{"cat":0,"points":[[0.0,0.0,0.5]]}]}"#;
    assert!(matches!(parse_jsonl(half, Path::new("d.jsonl")), Err(CliError::Parse { line: 1, .. })));
    let short = r#"{"writer":"a","glyphs":[{"cat":0,"points":[[0.0,0.0,1.0]]}],"layout":[]}"#;
    assert!(matches!(parse_jsonl(short, Path::new("d.jsonl")), Err(CliError::Parse { line: 1, .. })));
}

#[test]
fn jsonl_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.jsonl");
    let r = DatasetRecord {
        writer: "w".into(),
        glyphs: vec![GlyphRecord { cat: 3, points: vec![[0.1, 0.2, 1.0], [0.3, -0.4, -1.0]] }],
        layout: Some(vec![[1.0, 2.0, 3.0, 4.0]]),
        normalized: true,
    };
    write_jsonl(&p, std::slice::from_ref(&r)).unwrap();
    assert_eq!(read_jsonl(&p).unwrap(), vec![r]);
    assert!(matches!(read_jsonl(&dir.path().join("missing.jsonl")), Err(CliError::Io { .. })));
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let layout = LayoutModel::new(LayoutConfig { categories: 5, embed_dim: 8, hidden: 16, layers: 2 }, 3);
    let bytes = layout_to_checkpoint(&layout, None, "toy").to_bytes();
    let back = layout_from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), Some("toy")).unwrap();
    assert_eq!(layout_to_checkpoint(&back, None, "toy").to_bytes(), bytes);
    assert_eq!(back.config, layout.config);

    let font = FontModel::new(DiffusionConfig::toy(3), 4).unwrap();
    let fallback = Tensor::new(&[16, 3], (0..48).map(|i| i as f32 * 0.25).collect()).unwrap();
    let ckpt = font_to_checkpoint(&font, None, "toy", Some(&fallback));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("font.ckpt");
    ckpt.save(&p).unwrap();
    let loaded = Checkpoint::load(&p).unwrap();
    assert_eq!(loaded, ckpt);
    assert_eq!(std::fs::read(&p).unwrap(), ckpt.to_bytes());
    let model = font_from_checkpoint(&loaded, None).unwrap();
    assert_eq!(model.config, font.config);
    assert_eq!(loaded.get("meta.font.fallback_reference"), Some(&fallback));
}

#[test]
fn malformed_checkpoints_are_rejected() {
    let mut c = Checkpoint::new();
    c.insert("x", Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
    let bytes = c.to_bytes();
    assert_eq!(&bytes[..4], b"OLHG");
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(CliError::Checkpoint(_))));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(CliError::Checkpoint(_))));
    let mut wrong = bytes;
    wrong[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&wrong), Err(CliError::Checkpoint(_))));
}

#[test]
fn scale_mismatch_is_reported() {
    let layout = LayoutModel::new(LayoutConfig::new(4), 1);
    let c = layout_to_checkpoint(&layout, None, "toy");
    assert!(matches!(layout_from_checkpoint(&c, Some("paper")), Err(CliError::ConfigMismatch(_))));
}

#[test]
fn config_fills_missing_fields_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.json");
    std::fs::write(&p, r#"{"scale": "toy", "layout": {"steps": 7}}"#).unwrap();
    let c = RunConfig::load(&p).unwrap();
    assert_eq!(c.layout.steps, 7);
    assert_eq!(c.layout.hidden, RunConfig::default().layout.hidden);
    assert_eq!(c.scale, Scale::Toy);
    assert_eq!(c.diffusion(5).steps, 200);

    let full: RunConfig = serde_json::from_str(&serde_json::to_string(&RunConfig::default()).unwrap()).unwrap();
    assert_eq!(full, RunConfig::default());

    std::fs::write(&p, "{\n \"scale\": 3\n}").unwrap();
    assert!(matches!(RunConfig::load(&p), Err(CliError::Parse { line: 2, .. })));
}
