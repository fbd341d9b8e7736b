//! Result-table rows shared by every experiment:
//! `alpha,tau,loss_kind,noise_fraction,q_lo,q_hi,seed,train_acc,test_acc,extra_json`.

use super::TauSpec;
use crate::losses::LossKind;

pub const RESULTS_HEADER: &str =
    "alpha,tau,loss_kind,noise_fraction,q_lo,q_hi,seed,train_acc,test_acc,extra_json";

/// One experiment run. Fields that do not apply stay empty in the CSV.
#[derive(Debug, Clone, Default)]
pub struct ResultRow {
    pub alpha: Option<f64>,
    pub tau: Option<TauSpec>,
    pub loss_kind: String,
    pub noise_fraction: Option<f64>,
    pub q_lo: Option<f64>,
    pub q_hi: Option<f64>,
    pub seed: u64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub extra_json: String,
}

impl ResultRow {
    /// Fill alpha, tau, and the kind name from an objective.
    pub fn for_objective(obj: &crate::losses::DistillObjective, seed: u64) -> ResultRow {
        let tau = match obj.kind {
            LossKind::Kl { tau } | LossKind::RescaledKl { tau } => Some(TauSpec::Finite(tau)),
            LossKind::KlInfGrad => Some(TauSpec::Infinite),
            _ => None,
        };
        ResultRow {
            alpha: Some(obj.alpha),
            tau,
            loss_kind: obj.kind.name().to_string(),
            seed,
            ..ResultRow::default()
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Quote a field when it contains a comma or a quote, doubling inner quotes.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Split one CSV line back into fields, honoring quoting.
pub fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if quoted && chars.peek() == Some(&'"') => {
                current.push('"');
                chars.next();
            }
            '"' => quoted = !quoted,
            ',' if !quoted => {
                fields.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    fields.push(current);
    fields
}

pub fn results_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            opt(r.alpha),
            tau,
            r.loss_kind,
            opt(r.noise_fraction),
            opt(r.q_lo),
            opt(r.q_hi),
            r.seed,
            r.train_acc,
            r.test_acc,
            csv_field(&r.extra_json),
        ));
    }
    out
}

/// `epoch,loss` rows for one run's loss curve.
pub fn loss_curve_csv(epoch_losses: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in epoch_losses.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::DistillObjective;

    #[test]
    fn rows_round_trip_through_quoting() {
        let row = ResultRow {
            alpha: Some(0.5),
            tau: Some(TauSpec::Infinite),
            loss_kind: "kl_inf_grad".to_string(),
            seed: 42,
            train_acc: 0.9,
            test_acc: 0.8,
            extra_json: "{\"teacher_acc\":0.75,\"stage\":2}".to_string(),
            ..ResultRow::default()
        };
        let csv = results_to_csv(&[row]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULTS_HEADER);
        let fields = split_csv_line(lines.next().unwrap());
        assert_eq!(fields.len(), 10);
        assert_eq!(fields[0], "0.5");
        assert_eq!(fields[1], "inf");
        assert_eq!(fields[3], "");
        assert_eq!(fields[9], "{\"teacher_acc\":0.75,\"stage\":2}");
    }

    #[test]
    fn objective_prefill() {
        let obj =
            DistillObjective::new(1.0, crate::losses::LossKind::RescaledKl { tau: 0.5 }).unwrap();
        let row = ResultRow::for_objective(&obj, 7);
        assert_eq!(row.alpha, Some(1.0));
        assert_eq!(row.tau, Some(TauSpec::Finite(0.5)));
        assert_eq!(row.loss_kind, "rescaled_kl");
        assert_eq!(row.seed, 7);
    }

    #[test]
    fn loss_curve_format() {
        let csv = loss_curve_csv(&[1.5, 0.75]);
        assert_eq!(csv, "epoch,loss\n0,1.5\n1,0.75\n");
    }
}
