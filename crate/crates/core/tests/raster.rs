use graph2d::compress::{pca_fit, ChannelLayout, CompressedNodeVectors};
use graph2d::linalg::Matrix;
use graph2d::raster::{compute_spec, rasterize_graph, ImageSpec};
use rand::Rng as _;

fn layout(channels: usize) -> ChannelLayout {
    ChannelLayout { embedding_channels: channels, attribute_channels: 0 }
}

fn vectors(rows: Vec<Vec<f64>>) -> CompressedNodeVectors<f64> {
    CompressedNodeVectors { graph_id: 0, embedding: Matrix::from_rows(&rows), attributes: None }
}

#[test]
fn diagonal_covariance_components() {
    // (+-s, 0) and (0, +-t) with s^2 = 6, t^2 = 1.5: covariance diag(4, 1)
    let (s, t) = (6f64.sqrt(), 1.5f64.sqrt());
    let data = Matrix::from_rows(&[vec![s, 0.0], vec![-s, 0.0], vec![0.0, t], vec![0.0, -t]]);
    let model = pca_fit(&data, 2).unwrap();
    approx::assert_relative_eq!(model.explained_variance[0], 4.0, max_relative = 1e-12);
    approx::assert_relative_eq!(model.explained_variance[1], 1.0, max_relative = 1e-12);
    approx::assert_abs_diff_eq!(model.components.row(0)[0].abs(), 1.0, epsilon = 1e-12);
    approx::assert_abs_diff_eq!(model.components.row(0)[1], 0.0, epsilon = 1e-12);
    let scores = model.transform(&data).unwrap();
    approx::assert_abs_diff_eq!(model.inverse_transform(&scores).unwrap().as_slice(), data.as_slice(), epsilon = 1e-12);
}

#[test]
fn image_sizes_from_extent() {
    assert_eq!(ImageSpec::from_extent(-1.33, 2.78, 9.0, layout(1)).unwrap().size, 37);
    assert_eq!(ImageSpec::from_extent(-1.0, 1.0, 14.0, layout(1)).unwrap().size, 28);
    assert_eq!(ImageSpec::from_extent(0.5, 0.5, 14.0, layout(1)).unwrap().size, 1);
    let spec = compute_spec(&[vectors(vec![vec![-1.33, 0.0], vec![2.78, 1.0]])], 9.0, None).unwrap();
    assert_eq!(spec.shape(), (1, 37, 37));
}

#[test]
fn large_graph_counts_are_conserved() {
    let mut r = graph2d::rng::seeded(577);
    let rows: Vec<Vec<f64>> = (0..577).map(|_| (0..10).map(|_| r.random_range(-2.0..3.0)).collect()).collect();
    let v = vectors(rows);
    let spec = compute_spec(std::slice::from_ref(&v), 9.0, None).unwrap();
    let image = rasterize_graph(&v, &spec, 0).unwrap();
    assert_eq!(image.channels, 5);
    for c in 0..5 {
        assert_eq!(image.channel_sum(c), 577);
    }
}

#[test]
fn shifting_by_one_bin_moves_one_pixel() {
    let spec = ImageSpec::from_extent(0.0, 10.0, 1.0, layout(1)).unwrap();
    assert_eq!(spec.bin_width(), 1.0);
    let nodes = [[2.5, 3.5], [4.5, 4.5], [6.5, 1.5]];
    let base = rasterize_graph(&vectors(nodes.iter().map(|p| p.to_vec()).collect()), &spec, 0).unwrap();
    let right = rasterize_graph(&vectors(nodes.iter().map(|p| vec![p[0] + 1.0, p[1]]).collect()), &spec, 0).unwrap();
    let down = rasterize_graph(&vectors(nodes.iter().map(|p| vec![p[0], p[1] + 1.0]).collect()), &spec, 0).unwrap();
    for row in 0..10 {
        for col in 0..9 {
            assert_eq!(base.at(0, row, col), right.at(0, row, col + 1));
        }
    }
    for row in 0..9 {
        for col in 0..10 {
            assert_eq!(base.at(0, row, col), down.at(0, row + 1, col));
        }
    }
    assert_eq!(base.at(0, 3, 2), 1);
}

#[test]
fn midpoint_node_fills_one_bin() {
    let spec = ImageSpec::from_extent(-1.0, 1.0, 2.5, layout(1)).unwrap();
    let image = rasterize_graph(&vectors(vec![vec![0.0, 0.0]]), &spec, 0).unwrap();
    assert_eq!(image.counts.iter().filter(|&&c| c == 1).count(), 1);
    assert_eq!(image.counts.iter().sum::<u32>(), 1);
}
