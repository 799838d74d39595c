use super::{NumericsError, ParamStore, Tape, Var};

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the tape's gradient of `loss_fn` against central differences with
/// step `h` for every scalar of every parameter. `loss_fn` must be
/// deterministic. Parameters are restored before returning.
pub fn grad_check<F>(
    params: &mut ParamStore,
    h: f64,
    mut loss_fn: F,
) -> Result<GradCheckReport, NumericsError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NumericsError>,
{
    params.zero_grad();
    {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, params)?;
        tape.backward(loss, params)?;
    }
    let analytic: Vec<(String, Vec<f64>)> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.grad().expect("zeroed").to_vec()))
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for (name, grads) in &analytic {
        for (i, &a) in grads.iter().enumerate() {
            let original = params.get(name).expect("present").data()[i];
            params.get_mut(name).expect("present").data_mut()[i] = original + h;
            let plus = eval(&mut loss_fn, params)?;
            params.get_mut(name).expect("present").data_mut()[i] = original - h;
            let minus = eval(&mut loss_fn, params)?;
            params.get_mut(name).expect("present").data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn eval<F>(loss_fn: &mut F, params: &ParamStore) -> Result<f64, NumericsError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NumericsError>,
{
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, params)?;
    Ok(tape.scalar(loss))
}
