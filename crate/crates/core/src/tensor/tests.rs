use super::*;

fn t(data: &[f32], shape: &[usize]) -> Tensor {
    Tensor::new(data.to_vec(), shape)
}

#[test]
fn add_componentwise() {
    let c = t(&[1.0, 2.0], &[2]).add(&t(&[3.0, 4.0], &[2])).unwrap();
    assert_eq!(c.data(), &[4.0, 6.0]);
}

#[test]
fn tanh_of_zero() {
    let z = Tensor::zeros(&[3, 2]);
    assert!(z.tanh().data().iter().all(|&v| v == 0.0));
}

#[test]
fn grad_of_sum_of_squares() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, -2.0, 3.0], &[3]);
    let loss = x.square().sum();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 6.0]);
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let err = t(&[1.0, 2.0], &[2]).add(&t(&[1.0, 2.0, 3.0], &[3])).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2]") && msg.contains("[3]"), "{msg}");
}

#[test]
fn domain_errors() {
    assert!(matches!(t(&[-1.0], &[1]).ln(), Err(Error::Domain { .. })));
    assert!(matches!(t(&[-1.0], &[1]).sqrt(), Err(Error::Domain { .. })));
    assert!(matches!(
        t(&[1.0], &[1]).div(&t(&[0.0], &[1])),
        Err(Error::Domain { .. })
    ));
}

#[test]
fn matmul_identity_and_row_selection() {
    let eye = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
    let m = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    assert_eq!(eye.matmul(&m).unwrap().data(), m.data());
    let r = t(&[1.0, 0.0], &[1, 2]).matmul(&t(&[2.0, 7.0], &[2, 1])).unwrap();
    assert_eq!(r.shape(), &[1, 1]);
    assert_eq!(r.data(), &[2.0]);
}

#[test]
fn matmul_inner_mismatch() {
    let err = Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[2, 3])).unwrap_err();
    assert!(matches!(err, Error::Dimension { .. }));
}

#[test]
fn matmul_batched_broadcast() {
    let a = Tensor::new((0..12).map(|v| v as f32).collect(), &[2, 2, 3]);
    let b = Tensor::new((0..6).map(|v| v as f32).collect(), &[1, 3, 2]);
    let c = a.matmul(&b).unwrap();
    assert_eq!(c.shape(), &[2, 2, 2]);
    // second batch, first row: [6,7,8]·[[0,1],[2,3],[4,5]]
    assert_eq!(&c.data()[4..6], &[6.0 * 0.0 + 7.0 * 2.0 + 8.0 * 4.0, 6.0 + 7.0 * 3.0 + 8.0 * 5.0]);
}

#[test]
fn conv1d_identity_kernel() {
    let x = t(&[1.0, 2.0, 3.0], &[1, 1, 3]);
    let w = t(&[1.0], &[1, 1, 1]);
    assert_eq!(conv1d(&x, &w, None, 1, 0).unwrap().data(), &[1.0, 2.0, 3.0]);
}

#[test]
fn conv1d_sliding_sum() {
    let x = t(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 4]);
    let w = t(&[1.0, 1.0], &[1, 1, 2]);
    assert_eq!(conv1d(&x, &w, None, 1, 0).unwrap().data(), &[3.0, 5.0, 7.0]);
}

#[test]
fn conv1d_output_length_and_errors() {
    let x = Tensor::zeros(&[2, 3, 10]);
    let w = Tensor::zeros(&[4, 3, 5]);
    assert_eq!(conv1d(&x, &w, None, 2, 2).unwrap().shape(), &[2, 4, 5]);
    let big = Tensor::zeros(&[4, 3, 13]);
    assert!(matches!(conv1d(&x, &big, None, 1, 1), Err(Error::Dimension { .. })));
}

#[test]
fn conv_transpose_upsamples() {
    let x = Tensor::zeros(&[1, 3, 8]);
    let w = Tensor::zeros(&[3, 2, 4]);
    assert_eq!(conv_transpose1d(&x, &w, None, 2, 1).unwrap().shape(), &[1, 2, 16]);
}

#[test]
fn softmax_examples() {
    let s = t(&[0.0, 0.0, 0.0], &[3]).softmax(0).unwrap();
    for v in s.data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-7);
    }
    let s = t(&[1000.0, 0.0], &[2]).softmax(0).unwrap();
    assert!((s.data()[0] - 1.0).abs() < 1e-12 && s.data()[1].abs() < 1e-12);
    let s = t(&[42.0], &[1]).softmax(0).unwrap();
    assert_eq!(s.data(), &[1.0]);
    assert!(t(&[1.0], &[1]).softmax(1).is_err());
}

#[test]
fn backward_examples() {
    let tape = Tape::new();
    let x = tape.leaf(vec![0.5, -1.5, 2.0, 4.0], &[2, 2]);
    tape.backward(&x.sum()).unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0; 4]);

    // A loss that does not depend on x leaves a zero gradient.
    let tape = Tape::new();
    let x = tape.leaf(vec![0.5, -1.5], &[2]);
    let loss = x.scale(0.0).sum().add_scalar(3.0);
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2]);
    assert!(matches!(tape.backward(&x.square()), Err(Error::Contract(_))));
}

#[test]
fn repeated_backward_accumulates() {
    let tape = Tape::new();
    let x = tape.leaf(vec![3.0], &[1]);
    let loss = x.square().sum();
    tape.backward(&loss).unwrap();
    tape.backward(&loss).unwrap();
    assert_eq!(x.grad().unwrap(), vec![12.0]);
    tape.zero_grad();
    assert!(x.grad().is_none());
}

#[test]
fn fan_out_sums_gradients() {
    let tape = Tape::new();
    let x = tape.leaf(vec![1.0, 2.0], &[2]);
    let y = x.add(&x).unwrap();
    tape.backward(&y.sum()).unwrap();
    assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
}

#[test]
fn constants_are_not_recorded() {
    let tape = Tape::new();
    let c = Tensor::new(vec![1.0, 2.0], &[2]);
    let x = tape.leaf(vec![1.0, 1.0], &[2]);
    let _ = c.square().exp();
    assert_eq!(tape.num_ops(), 0);
    let y = x.mul(&c).unwrap();
    assert!(y.requires_grad());
    assert!(!c.requires_grad());
    tape.backward(&y.sum()).unwrap();
    assert!(c.grad().is_none());
}

#[test]
fn reshape_transpose_roundtrip_is_bit_exact() {
    let data: Vec<f32> = (0..24).map(|v| (v as f32).sin() * 1e3).collect();
    let x = Tensor::new(data.clone(), &[2, 3, 4]);
    let back = x
        .permute(&[2, 0, 1])
        .unwrap()
        .reshape(&[4, 6])
        .unwrap()
        .reshape(&[4, 2, 3])
        .unwrap()
        .permute(&[1, 2, 0])
        .unwrap();
    assert_eq!(back.shape(), &[2, 3, 4]);
    assert_eq!(back.data(), &data[..]);
}

#[test]
fn reductions() {
    let x = t(&[1.0, 5.0, 3.0, 2.0, 0.0, 4.0], &[2, 3]);
    assert_eq!(x.sum_axis(1, false).unwrap().data(), &[9.0, 6.0]);
    assert_eq!(x.mean_axis(0, true).unwrap().data(), &[1.5, 2.5, 3.5]);
    assert_eq!(x.max_axis(1, false).unwrap().data(), &[5.0, 4.0]);
    assert_eq!(x.mean().item(), 2.5);
}

#[test]
fn concat_and_slice() {
    let a = t(&[1.0, 2.0, 3.0, 4.0], &[2, 2]);
    let b = t(&[5.0, 6.0], &[2, 1]);
    let c = concat(&[&a, &b], 1).unwrap();
    assert_eq!(c.data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    assert_eq!(c.slice(1, 1, 3).unwrap().data(), &[2.0, 5.0, 4.0, 6.0]);
    assert!(concat(&[&a, &Tensor::zeros(&[3, 1])], 1).is_err());
}

#[test]
fn embedding_gathers_rows_and_rejects_out_of_range() {
    let table = t(&[0.0, 1.0, 10.0, 11.0, 20.0, 21.0], &[3, 2]);
    assert_eq!(embedding(&table, &[2, 0]).unwrap().data(), &[20.0, 21.0, 0.0, 1.0]);
    assert!(matches!(embedding(&table, &[3]), Err(Error::Lookup { index: 3, len: 3 })));
}

#[test]
fn layer_norm_standardizes() {
    let x = t(&[1.0, 2.0, 3.0, 4.0], &[1, 4]);
    let y = layer_norm(&x, &Tensor::full(&[4], 1.0), &Tensor::zeros(&[4]), 0.0).unwrap();
    let mean: f32 = y.data().iter().sum::<f32>() / 4.0;
    let var: f32 = y.data().iter().map(|v| v * v).sum::<f32>() / 4.0;
    assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-5);
}
