pub mod bound_check;
pub mod convergence;
pub mod oracle;
pub mod order_check;
pub mod simulate;

use mcvorder_core::coefficients::CoefficientSet;
use mcvorder_core::scheme::SchemeConfig;

use crate::manifest::Manifest;

/// Records the step-size constraint outcome for one model.
pub fn record_h_constraint(manifest: &mut Manifest, scheme: &SchemeConfig, model: &CoefficientSet) {
    let h = scheme.step_h();
    let status = if model.lip_x_drift <= 0.0 {
        "ok (no drift Lipschitz constraint)".to_string()
    } else {
        let bound = 1.0 / (2.0 * model.lip_x_drift);
        if h < bound {
            format!("ok (h = {h} < 1/(2*lip_x_drift) = {bound})")
        } else if scheme.allow_large_h {
            format!("violated but overridden (h = {h} >= {bound})")
        } else {
            format!("violated (h = {h} >= {bound})")
        }
    };
    manifest.kv(&format!("h_constraint.{}", model.label), status);
}
