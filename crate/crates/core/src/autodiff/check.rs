use crate::models::ParameterSet;

/// Central finite difference of `loss` along one coordinate of one parameter:
/// `(L(θ + h e) − L(θ − h e)) / 2h`.
///
/// # Panics
///
/// If `h` is not positive or the coordinate does not exist.
pub fn finite_diff_grad<F>(loss: F, params: &ParameterSet, name: &str, index: usize, h: f64) -> f64
where
    F: Fn(&ParameterSet) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = params.clone();
    let base = params.get(name).unwrap_or_else(|| panic!("no parameter named {name}")).data()[index];
    probe.get_mut(name).unwrap().data_mut()[index] = base + h;
    let up = loss(&probe);
    probe.get_mut(name).unwrap().data_mut()[index] = base - h;
    let down = loss(&probe);
    (up - down) / (2.0 * h)
}
