use metanav::analysis::{map_csv, map_ppm, parse_map_csv, parse_map_ppm, ActivationMap, MapSource};
use metanav::maze::load_map;
use metanav::nn::{
    checkpoint_records, encode_records, init_network, parse_checkpoint, text_record, AdamState, Layer, NetworkSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::maps::random_map_text;

fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let n_actions = rng.gen_range(1..5);
    let head = if rng.gen_bool(0.5) {
        Layer::DuelingHead { n_actions }
    } else {
        Layer::LinearHead { n_actions }
    };
    let mut layers = Vec::new();
    let h = rng.gen_range(3..9);
    let w = rng.gen_range(3..9);
    if rng.gen_bool(0.7) {
        layers.push(Layer::Conv {
            out_channels: rng.gen_range(1..5),
            kernel: rng.gen_range(1..4),
            stride: rng.gen_range(1..3),
        });
        layers.push(Layer::Relu);
    }
    if rng.gen_bool(0.7) {
        layers.push(Layer::Dense {
            out_units: rng.gen_range(1..9),
        });
        layers.push(Layer::Relu);
    }
    layers.push(head);
    NetworkSpec {
        input_shape: [h, w, rng.gen_range(1..4)],
        layers,
    }
}

/// Random network, optimizer state and extra records survive encode/decode bit-exactly.
pub fn checkpoint_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng);
    let params = init_network(&spec, rng.gen()).map_err(|e| e.to_string())?;
    let mut adam = AdamState::new(&params, rng.gen_range(1e-5..1e-1));
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        for v in t.data_mut() {
            *v = f32::from_bits(rng.gen_range(0..0x7f00_0000u32)) * if rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        }
    }
    adam.step = rng.gen_range(0..1 << 24);
    let mut extra = vec![text_record("meta.options", "a.ckpt\nSpinLeft")];
    if rng.gen_bool(0.5) {
        extra.clear();
    }
    let bytes = encode_records(&checkpoint_records(&params, &adam, &extra)).map_err(|e| e.to_string())?;
    let back = parse_checkpoint(&bytes).map_err(|e| e.to_string())?;
    if back.params != params || back.adam != adam || back.extra != extra {
        return Err(format!("checkpoint differs after round trip (spec {spec:?})"));
    }
    let bits = |p: &metanav::nn::NetworkParams| -> Vec<u32> {
        p.tensors().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
    };
    if bits(&back.params) != bits(&params) {
        return Err("parameter bits differ".into());
    }
    Ok(())
}

/// parse -> serialize -> parse is the identity, and serialization is stable.
pub fn map_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_map_text(&mut rng, true);
    let world = load_map(&text).map_err(|e| format!("{e}\n{text}"))?;
    let out = world.to_text();
    let again = load_map(&out).map_err(|e| format!("reparse: {e}\n{out}"))?;
    if again != world {
        return Err(format!("map differs after round trip:\n{text}\n--\n{out}"));
    }
    if again.to_text() != out {
        return Err("serialization is not stable".into());
    }
    if out.lines().take(world.rows()).collect::<Vec<_>>() != text.lines().take(world.rows()).collect::<Vec<_>>() {
        return Err("grid text changed".into());
    }
    Ok(())
}

pub fn random_activation_map(rng: &mut ChaCha8Rng) -> ActivationMap {
    let rows = rng.gen_range(1..20);
    let cols = rng.gen_range(1..20);
    let n_options = rng.gen_range(1..5);
    ActivationMap {
        rows,
        cols,
        resolution: 1,
        source: MapSource::FromQuery,
        cells: (0..rows * cols)
            .map(|_| if rng.gen_bool(0.2) { None } else { Some(rng.gen_range(0..n_options)) })
            .collect(),
    }
}

/// CSV (and PPM) export/import keeps every cell's option index.
pub fn activation_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let map = random_activation_map(&mut rng);
    let back = parse_map_csv(&map_csv(&map)).map_err(|e| e.to_string())?;
    if back != map {
        return Err(format!("CSV round trip changed a {}x{} map", map.rows, map.cols));
    }
    let back = parse_map_ppm(&map_ppm(&map)).map_err(|e| e.to_string())?;
    if back != map {
        return Err("PPM round trip changed the map".into());
    }
    Ok(())
}
