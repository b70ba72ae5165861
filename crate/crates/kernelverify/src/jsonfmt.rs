//! Kernel dump serialisation with full-precision floats.
//!
//! The dump contract requires every float printed with 17 significant
//! decimal digits, enough to round-trip any f64 exactly, so the default
//! shortest-representation printing is replaced here.

use std::io;

use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::{json, Value};

use crate::kernel::{ParamKernel, Parity};
use crate::tensor::Tensor;

struct FullPrecision;

impl Formatter for FullPrecision {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        // one leading digit + 16 fractional digits = 17 significant digits
        write!(writer, "{value:.16e}")
    }
}

/// Serialises with 17-significant-digit decimal floats.
pub fn to_string_full_precision<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FullPrecision);
    value
        .serialize(&mut ser)
        .expect("in-memory serialisation cannot fail");
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

fn matrix_value(t: &Tensor) -> Value {
    let s = t.shape()[0];
    Value::Array(
        (0..s)
            .map(|i| {
                Value::Array(
                    (0..t.shape()[1])
                        .map(|j| json!(t.at2(i, j)))
                        .collect(),
                )
            })
            .collect(),
    )
}

/// The `kernel dump` payload: the parameterisation itself, or the evaluated
/// kernel when a concrete `z` is given. Single-variable kernels dump their
/// coefficient matrix directly; `m > 1` dumps a list of matrices.
pub fn kernel_dump(kernel: &ParamKernel, z: Option<f64>) -> String {
    let mut object = serde_json::Map::new();
    object.insert("family".into(), json!(kernel.family().name()));
    object.insert("size".into(), json!(kernel.size()));
    if let Some(angle) = kernel.family().angle() {
        object.insert("angle".into(), json!(angle.degrees()));
    }
    match z {
        Some(z) => {
            let evaluated = kernel
                .evaluate(&vec![z; kernel.num_vars()])
                .expect("dimension matches by construction");
            object.insert("z".into(), json!(z));
            object.insert("kernel".into(), matrix_value(&evaluated));
        }
        None => {
            object.insert("m".into(), json!(kernel.num_vars()));
            let coeffs = if kernel.num_vars() == 1 {
                matrix_value(&kernel.coeffs()[0])
            } else {
                Value::Array(kernel.coeffs().iter().map(matrix_value).collect())
            };
            object.insert("coeffs".into(), coeffs);
            object.insert("bias".into(), matrix_value(kernel.bias()));
        }
    }
    if kernel.parity() == Parity::EvenApprox {
        if let Some(warning) = kernel.warning() {
            object.insert("warning".into(), json!(warning.code()));
        }
    }
    to_string_full_precision(&Value::Object(object))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{box_blur_param, even_param, motion_blur_param, BlurAngle, KernelFamily};

    #[test]
    fn floats_round_trip_through_the_dump() {
        let dump = kernel_dump(&motion_blur_param(3, BlurAngle::Deg45).unwrap(), None);
        let value: Value = serde_json::from_str(&dump).unwrap();
        assert_eq!(value["family"], "motion-blur");
        assert_eq!(value["angle"], 45);
        assert_eq!(value["m"], 1);
        let coeff = value["coeffs"][0][2].as_f64().unwrap();
        assert_eq!(coeff, 1.0 / 3.0);
        assert_eq!(value["bias"][1][1].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn seventeen_digit_mantissas_appear_verbatim() {
        let dump = kernel_dump(&box_blur_param(3).unwrap(), None);
        assert!(dump.contains("1.1111111111111110e-1"), "dump: {dump}");
    }

    #[test]
    fn evaluated_dump_carries_z_and_kernel() {
        let dump = kernel_dump(&box_blur_param(3).unwrap(), Some(1.0));
        let value: Value = serde_json::from_str(&dump).unwrap();
        assert_eq!(value["z"].as_f64().unwrap(), 1.0);
        assert_eq!(value["kernel"][0][0].as_f64().unwrap(), 1.0 / 9.0);
        assert!(value.get("coeffs").is_none());
    }

    #[test]
    fn even_dump_carries_the_warning() {
        let dump = kernel_dump(&even_param(KernelFamily::BoxBlur, 4).unwrap(), None);
        let value: Value = serde_json::from_str(&dump).unwrap();
        assert_eq!(value["warning"], "even-identity-approx");
    }
}
