use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::snowman;
use crate::geodesic::Reweighting;
use crate::render::ViewSampling;
use crate::mesh::{save_mesh, MeshFormat, PlyEncoding};

/// IoU from explicit face sets.
fn set_iou(pred: &[i32], gt: &[i32], part: i32) -> Option<f64> {
    let p: HashSet<usize> = (0..pred.len()).filter(|&i| pred[i] == part).collect();
    let g: HashSet<usize> = (0..gt.len()).filter(|&i| gt[i] == part).collect();
    let union = p.union(&g).count();
    (union > 0).then(|| p.intersection(&g).count() as f64 / union as f64)
}

#[test]
fn matches_set_arithmetic_on_random_labelings() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let parts = rng.random_range(1..6);
        let n = rng.random_range(0..60);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<i32> { (0..n).map(|_| rng.random_range(-1..parts as i32)).collect() };
        let pred = draw(&mut rng);
        let gt = draw(&mut rng);
        let got = iou_per_part(&pred, &gt, parts).unwrap();
        let want: Vec<Option<f64>> = (0..parts as i32).map(|k| set_iou(&pred, &gt, k)).collect();
        assert_eq!(got, want);
        assert_eq!(iou_per_part(&gt, &pred, parts).unwrap(), got);
    }
}

#[test]
fn worked_examples() {
    let gt: Vec<i32> = (0..20).map(|i| if (1..=10).contains(&i) { 0 } else { -1 }).collect();
    assert_eq!(iou_per_part(&gt, &gt, 1).unwrap(), vec![Some(1.0)]);
    let shifted: Vec<i32> = (0..20).map(|i| if (6..=15).contains(&i) { 0 } else { -1 }).collect();
    assert_eq!(iou_per_part(&shifted, &gt, 1).unwrap(), vec![Some(5.0 / 15.0)]);

    let balanced = [0, 0, 1, 1];
    assert_eq!(
        iou_per_part(&[0, 0, 0, 0], &balanced, 2).unwrap(),
        vec![Some(0.5), Some(0.0)]
    );
    // part 2 never appears and is left out of the mean
    let ious = iou_per_part(&[0, 0, 0, 0], &balanced, 3).unwrap();
    assert_eq!(ious[2], None);
    assert_eq!(mean_defined(&ious), Some(0.25));
}

#[test]
fn input_errors() {
    assert!(matches!(
        iou_per_part(&[0, 1], &[0], 2),
        Err(EvalError::LengthMismatch { pred: 2, gt: 1 })
    ));
    assert!(matches!(
        iou_per_part(&[0, 2], &[0, 0], 2),
        Err(EvalError::LabelOutOfRange { label: 2, .. })
    ));
    assert!(iou_per_part(&[-2], &[0], 2).is_err());
}

#[test]
fn class_permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let perm = [2, 0, 3, 1];
    for _ in 0..50 {
        let pred: Vec<i32> = (0..40).map(|_| rng.random_range(-1..4)).collect();
        let gt: Vec<i32> = (0..40).map(|_| rng.random_range(-1..4)).collect();
        let map = |v: &[i32]| -> Vec<i32> { v.iter().map(|&l| if l < 0 { l } else { perm[l as usize] }).collect() };
        let a = iou_per_part(&pred, &gt, 4).unwrap();
        let b = iou_per_part(&map(&pred), &map(&gt), 4).unwrap();
        for k in 0..4 {
            assert_eq!(a[k], b[perm[k] as usize]);
        }
        let (ma, mb) = (mean_defined(&a).unwrap(), mean_defined(&b).unwrap());
        assert!((ma - mb).abs() <= 1e-15 * ma.abs().max(1.0));
    }
}

fn parts2() -> Vec<PartEntry> {
    vec![
        PartEntry {
            class_id: 7,
            prompt: "head".into(),
        },
        PartEntry {
            class_id: 3,
            prompt: "body".into(),
        },
    ]
}

#[test]
fn two_level_averaging() {
    let parts = parts2();
    let a = ShapeReport::scored("a", "x", &[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
    let b = ShapeReport::scored("b", "x", &[1, 1, 1, 1], &[1, 1, 1, 1], 2).unwrap();
    let c = ShapeReport::scored("c", "y", &[0, 0], &[0, 0], 2).unwrap();
    let r = PartIoUReport::summarize(&parts, vec![a.clone(), b, c]);
    // head: a = 1/2, c = 1; body: a = 2/3, b = 1
    assert_eq!(r.parts[0].iou, Some(0.75));
    assert_eq!(r.parts[0].shapes, 2);
    assert_eq!(r.parts[1].iou, Some((2.0 / 3.0 + 1.0) / 2.0));
    assert_eq!(r.overall, Some((r.parts[0].iou.unwrap() + r.parts[1].iou.unwrap()) / 2.0));
    assert_eq!(r.categories.len(), 2);
    assert_eq!(r.categories[0].category, "x");
    assert_eq!(r.categories[0].part_iou, vec![Some(0.5), Some((2.0 / 3.0 + 1.0) / 2.0)]);
    assert_eq!(r.categories[1].part_iou, vec![Some(1.0), None]);
    assert_eq!(r.categories[1].miou, Some(1.0));
    assert_eq!(r.parts[1].faces, 3 + 4);

    let single = PartIoUReport::summarize(&parts, vec![a.clone()]);
    let twice = PartIoUReport::summarize(&parts, vec![a.clone(), a]);
    for (s, t) in single.parts.iter().zip(&twice.parts) {
        assert_eq!(s.iou, t.iou);
    }
    assert_eq!(single.overall, twice.overall);

    let failed = ShapeReport::failed("gone", "x", "missing".into(), 2);
    let with_failure = PartIoUReport::summarize(&parts, vec![single.shapes[0].clone(), failed]);
    assert_eq!(with_failure.failed, 1);
    assert_eq!(with_failure.overall, single.overall);
}

#[test]
fn csv_and_json_reports() {
    let parts = vec![PartEntry {
        class_id: 0,
        prompt: "left, upper arm".into(),
    }];
    let r = PartIoUReport::summarize(&parts, vec![ShapeReport::scored("m", "c", &[0, -1], &[0, 0], 1).unwrap()]);
    let csv = r.to_csv().unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "scope,category,part,iou,shapes");
    assert_eq!(rows[1], "part,,\"left, upper arm\",0.5,1");
    assert_eq!(*rows.last().unwrap(), "overall,,,0.5,1");
    let back: PartIoUReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn class_ids_map_to_part_indices() {
    assert_eq!(classes_to_parts(&[3, 7, 9, -1], &parts2()), vec![1, 0, -1, -1]);
}

#[test]
fn label_files() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("a.txt");
    std::fs::write(&txt, "0 1\n-1\t2\n").unwrap();
    assert_eq!(load_labels(&txt).unwrap(), vec![0, 1, -1, 2]);
    let json = dir.path().join("a.json");
    std::fs::write(&json, "[3, 4]").unwrap();
    assert_eq!(load_labels(&json).unwrap(), vec![3, 4]);
    std::fs::write(&txt, "0 x").unwrap();
    assert!(matches!(load_labels(&txt), Err(EvalError::Labels { .. })));
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        n_views: 4,
        resolution: 128,
        ..PipelineConfig::default()
    }
}

fn write_snowman(dir: &std::path::Path) -> Manifest {
    let fx = snowman();
    save_mesh(&fx.mesh, &dir.join("snowman.ply"), MeshFormat::Ply, PlyEncoding::Ascii, None).unwrap();
    let text = r#"{
        "shapes": [
            {"mesh": "snowman.ply", "category": "toy"},
            {"mesh": "missing.ply", "category": "toy"}
        ],
        "parts": [{"class_id": 0, "prompt": "head"}, {"class_id": 1, "prompt": "body"}]
    }"#;
    std::fs::write(dir.join("manifest.json"), text).unwrap();
    Manifest::load(&dir.join("manifest.json")).unwrap()
}

#[test]
fn benchmark_flags_missing_shapes_and_scores_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_snowman(dir.path());
    let r = run_benchmark(&m, &small_config()).unwrap();
    assert_eq!(r.failed, 1);
    assert!(r.shapes[0].is_ok());
    assert!(matches!(r.shapes[1].status, ShapeStatus::Failed(_)));
    assert!(r.overall.unwrap() > 0.8, "{:?}", r.overall);
    assert_eq!(r.parts[0].faces + r.parts[1].faces, snowman().mesh.num_faces());
    assert_eq!(run_benchmark(&m, &small_config()).unwrap(), r);

    let empty = Manifest {
        shapes: vec![],
        parts: m.parts.clone(),
    };
    assert!(matches!(run_benchmark(&empty, &small_config()), Err(EvalError::EmptyManifest)));
}

#[test]
fn manifest_validation() {
    assert!(Manifest::from_json(r#"{"shapes": [], "parts": [{"class_id": 1, "prompt": "a"}, {"class_id": 1, "prompt": "b"}]}"#).is_err());
    assert!(Manifest::from_json(r#"{"shapes": [], "parts": [{"class_id": 1, "prompt": " "}]}"#).is_err());
    assert!(Manifest::from_json(r#"{"shapes": [{"mesh": "a.ply", "extra": 1}], "parts": []}"#).is_err());
    let m = Manifest::from_json(r#"{"shapes": [{"mesh": "a.ply"}], "parts": []}"#).unwrap();
    assert_eq!(m.shapes[0].category, "default");
}

#[test]
fn sweep_axes() {
    assert_eq!("n_views".parse::<SweepAxis>().unwrap(), SweepAxis::NViews(N_VIEWS_GRID.to_vec()));
    assert_eq!("n_views=5, 10".parse::<SweepAxis>().unwrap(), SweepAxis::NViews(vec![5, 10]));
    assert_eq!(
        "smoothing=off,on".parse::<SweepAxis>().unwrap(),
        SweepAxis::Smoothing(vec![false, true])
    );
    assert_eq!(
        "color=b4b4b4,#ff0000".parse::<SweepAxis>().unwrap(),
        SweepAxis::Color(vec![[180, 180, 180], [255, 0, 0]])
    );
    assert_eq!(
        "reweighting=none,gaussian".parse::<SweepAxis>().unwrap(),
        SweepAxis::Reweighting(vec![Reweighting::None, Reweighting::Gaussian])
    );
    for bad in ["n_views=0", "depth=1", "sampling=", "color=12345", "smoothing=maybe"] {
        assert!(bad.parse::<SweepAxis>().is_err(), "{bad}");
    }
    let base = small_config();
    let cfgs = SweepAxis::Sampling(vec![ViewSampling::Normal, ViewSampling::Uniform]).configs(&base);
    assert_eq!(cfgs[1].0, "uniform");
    assert_eq!(cfgs[1].1.seed, base.seed);
    assert_eq!(cfgs[1].1.sampling, ViewSampling::Uniform);
}

#[test]
fn smoothing_sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_snowman(dir.path());
    let axis = SweepAxis::Smoothing(vec![false, true]);
    let a = ablation_sweep(&m, &small_config(), &axis).unwrap();
    let b = ablation_sweep(&m, &small_config(), &axis).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 2);
    let csv = a.to_csv().unwrap();
    assert!(csv.starts_with("smoothing,miou,head,body\noff,"));
}
