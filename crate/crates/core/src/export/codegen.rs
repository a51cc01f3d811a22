use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::bundle::{ExportBundle, SUPPORTED_ACTIVATIONS};

/// Values per line in generated array initializers.
const PER_LINE: usize = 8;

/// Name of the generated entry point.
pub const C_ENTRY: &str = "rotctl_policy";

fn c_float(v: f32) -> String {
    if v.is_finite() {
        format!("{v:e}f")
    } else {
        "0.0f".into()
    }
}

fn array(out: &mut String, name: &str, data: &[f32]) {
    let _ = writeln!(out, "static const float {name}[{}] = {{", data.len());
    for chunk in data.chunks(PER_LINE) {
        let cells: Vec<String> = chunk.iter().map(|&v| c_float(v)).collect();
        let _ = writeln!(out, "    {},", cells.join(", "));
    }
    out.push_str("};\n\n");
}

/// Self-contained C99 translation unit evaluating the bundle.
///
/// Defines `void rotctl_policy(const float input[N_IN], float output[N_OUT])`,
/// uses only `<math.h>`, static storage and stack buffers, and accumulates in
/// `double` like the reference interpreter.
pub fn emit_c_source(bundle: &ExportBundle) -> Result<String> {
    for l in &bundle.layers {
        if !SUPPORTED_ACTIVATIONS.contains(&l.activation.as_str()) {
            return Err(Error::Config(format!("C export does not support activation `{}`", l.activation)));
        }
    }
    bundle.validate()?;
    let mut s = String::new();
    s.push_str("/* Generated policy network. Do not edit. */\n");
    s.push_str("#include <math.h>\n\n");
    let _ = writeln!(s, "#define ROTCTL_POLICY_INPUT_DIM {}", bundle.input_dim);
    let _ = writeln!(s, "#define ROTCTL_POLICY_OUTPUT_DIM {}", bundle.output_dim);
    let _ = writeln!(s, "#define ROTCTL_POLICY_PARAM_COUNT {}", bundle.param_count());
    let _ = writeln!(s, "#define ROTCTL_POLICY_MAX_WIDTH {}\n", bundle.max_width());
    s.push_str("const unsigned long rotctl_policy_param_count = ROTCTL_POLICY_PARAM_COUNT;\n\n");
    array(&mut s, "obs_mean", &bundle.obs_mean);
    array(&mut s, "obs_std", &bundle.obs_std);
    array(&mut s, "action_low", &bundle.action_low);
    array(&mut s, "action_high", &bundle.action_high);
    let mut off = 0;
    for (i, l) in bundle.layers.iter().enumerate() {
        let nw = l.in_dim * l.out_dim;
        array(&mut s, &format!("w{i}"), &bundle.weights[off..off + nw]);
        array(&mut s, &format!("b{i}"), &bundle.weights[off + nw..off + nw + l.out_dim]);
        off += l.param_count();
    }
    s.push_str("static void layer(const double *x, double *y, const float *w, const float *b,\n");
    s.push_str("                  int n_in, int n_out, int act)\n{\n");
    s.push_str("    int i, o;\n    for (o = 0; o < n_out; ++o) {\n");
    s.push_str("        double acc = (double)b[o];\n");
    s.push_str("        for (i = 0; i < n_in; ++i) {\n");
    s.push_str("            acc += x[i] * (double)w[i * n_out + o];\n        }\n");
    s.push_str("        if (act == 1) {\n            acc = acc > 0.0 ? acc : 0.0;\n");
    s.push_str("        } else if (act == 2) {\n            acc = tanh(acc);\n        }\n");
    s.push_str("        y[o] = acc;\n    }\n}\n\n");
    let _ = writeln!(
        s,
        "void {C_ENTRY}(const float input[ROTCTL_POLICY_INPUT_DIM], float output[ROTCTL_POLICY_OUTPUT_DIM])\n{{"
    );
    s.push_str("    double a[ROTCTL_POLICY_MAX_WIDTH];\n    double b[ROTCTL_POLICY_MAX_WIDTH];\n    int k;\n");
    s.push_str("    for (k = 0; k < ROTCTL_POLICY_INPUT_DIM; ++k) {\n");
    s.push_str("        a[k] = ((double)input[k] - (double)obs_mean[k]) / (double)obs_std[k];\n    }\n");
    for (i, l) in bundle.layers.iter().enumerate() {
        let act = match l.activation.as_str() {
            "relu" => 1,
            "tanh" => 2,
            _ => 0,
        };
        let (src, dst) = if i % 2 == 0 { ("a", "b") } else { ("b", "a") };
        let _ = writeln!(s, "    layer({src}, {dst}, w{i}, b{i}, {}, {}, {act});", l.in_dim, l.out_dim);
    }
    let last = if bundle.layers.len() % 2 == 1 { "b" } else { "a" };
    s.push_str("    for (k = 0; k < ROTCTL_POLICY_OUTPUT_DIM; ++k) {\n");
    s.push_str("        double lo = (double)action_low[k];\n        double hi = (double)action_high[k];\n");
    s.push_str("        double half = 0.5 * (hi - lo);\n");
    let _ = writeln!(s, "        double v = lo + half + half * tanh({last}[k]);");
    s.push_str("        if (v < lo) {\n            v = lo;\n        }\n");
    s.push_str("        if (v > hi) {\n            v = hi;\n        }\n");
    s.push_str("        output[k] = (float)v;\n    }\n}\n");
    Ok(s)
}

/// Number of float literals inside array initializers of generated source.
pub fn count_array_values(source: &str) -> usize {
    let mut inside = false;
    let mut n = 0;
    for line in source.lines() {
        if line.starts_with("static const float") {
            inside = true;
            continue;
        }
        if inside && line.starts_with("};") {
            inside = false;
            continue;
        }
        if inside {
            n += line.split(',').filter(|c| !c.trim().is_empty()).count();
        }
    }
    n
}
