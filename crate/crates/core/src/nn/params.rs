/// How the output head is attached to the body described by `layer_sizes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSpec<'a> {
    /// The layer list is the whole network.
    Plain,
    /// `layer_sizes` is a shared trunk; the value and advantage streams both
    /// start from its last width.
    Dueling { value: &'a [usize], advantage: &'a [usize] },
}

fn affine_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Trainable mean parameters: `Σ (in·out + out)` over affine layers.
pub fn count_params(layer_sizes: &[usize], head: HeadSpec<'_>) -> usize {
    let body = affine_params(layer_sizes);
    match head {
        HeadSpec::Plain => body,
        HeadSpec::Dueling { value, advantage } => body + affine_params(value) + affine_params(advantage),
    }
}
