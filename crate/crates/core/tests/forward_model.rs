mod common;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cfsense::forward::{
    assemble_sensing_matrix, noiseless_observation, read_dump, row_blocks, synthesize_observation, write_dump,
    Beamforming, Provenance, SensingMatrix,
};
use cfsense::scene::{Point2, Target};
use cfsense::waveform::BfPattern;
use cfsense::C64;

use common::*;

fn dims() -> SceneDims {
    SceneDims {
        rus: 3,
        antennas: 6,
        beams: 3,
        subcarriers: 5,
        nx: 6,
        ny: 5,
    }
}

#[test]
fn rows_follow_the_schedule() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (scene, schedule) = ring_scene(&mut rng, &dims());
    let bf = Beamforming::draw(&scene, BfPattern::Equal, &mut rng).unwrap();
    let sensing = assemble_sensing_matrix(&scene, &schedule, &bf).unwrap();
    // Round robin over three RUs: one illuminator and two receivers per slot.
    assert_eq!(sensing.nrows(), 3 * 2 * 6 * 5);
    assert_eq!(sensing.ncols(), 30);
    let blocks = row_blocks(&scene, &schedule);
    assert_eq!(blocks.len(), 6);
    for b in &blocks {
        assert!(!schedule.slots[b.slot].transmitters.contains(&b.receiver));
    }
}

#[test]
fn restacking_blocks_reproduces_the_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (scene, schedule) = ring_scene(&mut rng, &dims());
    let bf = Beamforming::draw(&scene, BfPattern::Random, &mut rng).unwrap();
    let sensing = assemble_sensing_matrix(&scene, &schedule, &bf).unwrap();
    let parts: Vec<_> = sensing.row_blocks.iter().map(|b| sensing.block(b)).collect();
    let again = SensingMatrix::restack(&parts);
    assert_eq!(from_mat(again.as_ref()), from_mat(sensing.a.as_ref()));
}

#[test]
fn observation_is_linear_in_fading() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (scene, schedule) = ring_scene(&mut rng, &dims());
    let targets = vec![
        Target::new(Point2::new(33.3, 41.7), 10.0).unwrap(),
        Target::new(Point2::new(61.2, 58.9), 10.0).unwrap(),
    ];
    let scene = scene.with_targets(targets).unwrap();
    let bf = Beamforming::draw(&scene, BfPattern::Random, &mut rng).unwrap();
    let f1 = random_vec(&mut rng, 2);
    let f2 = random_vec(&mut rng, 2);
    let s = C64::new(-0.7, 1.9);
    let combo: Vec<C64> = f1.iter().zip(&f2).map(|(a, b)| a + b * s).collect();
    let y1 = noiseless_observation(&scene, &schedule, &bf, &f1).unwrap();
    let y2 = noiseless_observation(&scene, &schedule, &bf, &f2).unwrap();
    let y = noiseless_observation(&scene, &schedule, &bf, &combo).unwrap();
    let expect: Vec<C64> = y1.iter().zip(&y2).map(|(a, b)| a + b * s).collect();
    assert!(max_abs_diff(&y, &expect) < 1e-12 * max_abs(&expect));
    assert!(noiseless_observation(&scene, &schedule, &bf, &f1[..1]).is_err());
}

#[test]
fn provenance_tracks_grid_membership() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (scene, schedule) = ring_scene(&mut rng, &dims());
    let picks = sample(&mut rng, scene.grid.len(), 2).into_vec();
    let on = on_grid_targets(&scene, &picks, 5.0);
    let bf = Beamforming::draw(&on, BfPattern::Equal, &mut rng).unwrap();
    let obs = synthesize_observation(&on, &schedule, &bf, &mut rng, true).unwrap();
    assert_eq!(obs.provenance, Provenance::OnGrid);

    let off = scene
        .with_targets(vec![Target::new(Point2::new(50.5, 49.25), 5.0).unwrap()])
        .unwrap();
    let obs = synthesize_observation(&off, &schedule, &bf, &mut rng, true).unwrap();
    assert_eq!(obs.provenance, Provenance::OffGrid);
}

#[test]
fn additive_noise_has_the_configured_power() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (scene, schedule) = ring_scene(&mut rng, &dims());
    let scene = cfsense::scene::Scene {
        noise_power: 2.5,
        ..scene
    };
    let scene = scene
        .with_targets(vec![Target::new(Point2::new(40.0, 60.0), 3.0).unwrap()])
        .unwrap();
    let bf = Beamforming::draw(&scene, BfPattern::Equal, &mut rng).unwrap();
    let (mut sum, mut count) = (0.0, 0usize);
    for _ in 0..40 {
        let obs = synthesize_observation(&scene, &schedule, &bf, &mut rng, false).unwrap();
        let clean = noiseless_observation(&scene, &schedule, &bf, &obs.fading).unwrap();
        for (a, b) in obs.y.iter().zip(&clean) {
            sum += (a - b).norm_sqr();
            count += 1;
        }
    }
    let power = sum / count as f64;
    assert!((power / 2.5 - 1.0).abs() < 0.05, "{power}");
}

#[test]
fn dump_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let m = to_mat(&random_dense(&mut rng, 7, 3));
    let path = std::env::temp_dir().join(format!("cfsense-dump-{}.bin", std::process::id()));
    write_dump(&path, m.as_ref()).unwrap();
    let back = read_dump(&path).unwrap();
    let len = std::fs::metadata(&path).unwrap().len();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(from_mat(back.as_ref()), from_mat(m.as_ref()));
    assert_eq!(len, 16 + 16 * 7 * 3);
}
