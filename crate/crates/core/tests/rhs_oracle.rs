//! Moment drift against values computed independently in 40-digit
//! arithmetic straight from the single-site generator (cell law given by
//! integer weights, so the inputs are exact).

use spinfield_core::limit::mkv_rhs;
use spinfield_core::model::cell_probs_to_moments;
use spinfield_core::ModelParams;

#[rustfmt::skip]
const CASES: [(f64, f64, f64, [u32; 8], u32, [f64; 7]); 6] = [
    (2.2, 0.5, 0.25, [332, 971, 155, 405, 667, 50, 75, 841], 3496, [0.0, -0.78606767570076302781, 0.32430708312800725287, 5.8646046733436030152, 4.4683150474241226774, -0.34359435192100008033, -3.0063534876504102632]),
    (1.5, 0.5, 0.1, [597, 60, 932, 520, 220, 39, 89, 445], 2902, [0.0, 3.7037216199941889747, -1.2375055291220024436, 5.7203519303954565725, -0.85081006771925624484, -0.23540007672454577421, -2.3234055658318627255]),
    (0.7, 4.0, 0.45, [93, 565, 435, 61, 847, 580, 127, 971], 3679, [0.0, -1.1379729841387517413, 16.656643217946423329, 2.3606922429717891624, -0.21755981120399311078, 16.739164225174982261, -1.3853465406003353209]),
    (0.7, 0.5, 1.2, [597, 971, 64, 591, 600, 407, 51, 1000], 4281, [0.0, -0.2112153006164209374, 0.93603081471841015669, 0.39017606929400897363, 0.5439688856335821652, 0.53353796564147145943, -0.58259476882920034939]),
    (1.0, 3.0, 0.45, [880, 137, 297, 430, 148, 554, 121, 585], 3152, [0.0, 0.1157154517232199828, -0.28733312613263112303, 3.2743985639433920265, -0.752615117172113091, 2.284339519049899416, 1.1953186466359392297]),
    (2.2, 4.0, 0.0, [186, 106, 596, 585, 655, 193, 382, 100], 2803, [0.0, 2.1293449127525642745, -0.79194139115608704246, 13.939776895224630245, 2.9202021592821833623, -0.058952196474902396933, -3.0023954944820100368]),
];

#[test]
fn drift_matches_extended_precision_values() {
    for (beta, gamma, h, weights, total, expected) in CASES {
        let p = weights.map(|w| f64::from(w) / f64::from(total));
        let m = cell_probs_to_moments(&p);
        let got = mkv_rhs(&m, &ModelParams::limit(beta, gamma, h).unwrap());
        let scale = expected.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for i in 0..7 {
            assert!((got[i] - expected[i]).abs() < 1e-13 * scale, "({beta}, {gamma}, {h}) component {i}: {} vs {}", got[i], expected[i]);
        }
    }
}
