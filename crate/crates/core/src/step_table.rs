// Rows are bit-widths 1..=16, columns are Uniform, Gaussian, Laplacian, Gamma.
// Rows 1-4 are the published optimal steps; rows 5-16 are regenerated by
// `cargo run --release -p fxq --example gen_step_table`.

pub(crate) const STEP_TABLE: [[f64; 4]; 16] = [
    [1.0, 1.596, 1.414, 1.154],
    [0.5, 0.996, 1.087, 1.060],
    [0.25, 0.586, 0.731, 0.796],
    [0.125, 0.335, 0.456, 0.540],
    [0.0625, 0.188131, 0.280657, 0.345793],
    [0.03125, 0.104208, 0.166110, 0.212856],
    [0.015625, 0.056918, 0.096189, 0.126795],
    [0.0078125, 0.030848, 0.054517, 0.073682],
    [0.00390625, 0.016643, 0.030410, 0.042171],
    [0.001953125, 0.008961, 0.016934, 0.023510],
    [0.0009765625, 0.004803, 0.009394, 0.013002],
    [0.00048828125, 0.002515, 0.005068, 0.006984],
    [0.000244140625, 0.001298, 0.002659, 0.003700],
    [0.0001220703125, 0.000660, 0.001381, 0.001915],
    [0.00006103515625, 0.000333, 0.000697, 0.000965],
    [0.000030517578125, 0.000167, 0.000349, 0.000484],
];
