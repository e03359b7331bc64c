//! Human-readable exports of a model: a canonical line-oriented pipeline
//! description and a standalone Python script.
//!
//! Pipeline grammar:
//!
//! ```text
//! pipeline  = header , { node } , { output } , aggregate , endpoint ;
//! header    = "cgpseg-pipeline 1" , NL ,
//!             "library " , id , " " , hash , NL ,
//!             "preprocess " , name , NL ,
//!             "inputs " , int , NL ;
//! node      = "node " , addr , " " , name , " " , addr , { "," , addr } ,
//!             { " " , key , "=" , int } , NL ;
//! output    = "output " , int , " " , addr , NL ;
//! aggregate = "aggregate mean" , NL ;
//! endpoint  = "endpoint " , kind , { " " , key , "=" , value } , NL ;
//! ```
//!
//! Addresses `1..=inputs` are input channels. Node lines are in increasing
//! address order, which is a valid execution order. Arguments are the
//! mapped values the primitive receives, not raw genes.

use std::fmt::Write as _;

use crate::endpoints::EndpointSpec;
use crate::imgops::{FunctionSpec, ParamKind};
use crate::model::{Aggregation, PipelineModel};

pub const DSL_VERSION: u32 = 1;

fn kind_name(k: ParamKind) -> &'static str {
    match k {
        ParamKind::Kernel => "kernel",
        ParamKind::Threshold => "threshold",
        ParamKind::Shift => "shift",
    }
}

/// `(name, mapped value)` per parameter slot the function reads.
pub fn named_args(f: &FunctionSpec, raw: &[u8]) -> Vec<(String, u32)> {
    let mapped = f.map_params(raw);
    f.params
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let repeated = f.params.iter().filter(|&&o| o == k).count() > 1;
            let name = if repeated {
                format!("{}{}", kind_name(k), i + 1)
            } else {
                kind_name(k).to_string()
            };
            (name, mapped[i])
        })
        .collect()
}

/// `key=value` pairs of the endpoint, keys sorted.
fn endpoint_fields(e: &EndpointSpec) -> Vec<(String, String)> {
    let value = serde_json::to_value(e).expect("endpoint serializes");
    let mut out = Vec::new();
    if let serde_json::Value::Object(map) = value {
        let mut keys: Vec<_> = map.keys().filter(|k| *k != "kind").cloned().collect();
        keys.sort();
        for k in keys {
            let v = &map[&k];
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            out.push((k, s));
        }
    }
    out
}

pub fn to_dsl(model: &PipelineModel) -> String {
    let lib = model.library();
    let graph = model.graph();
    let mut s = String::new();
    let _ = writeln!(s, "cgpseg-pipeline {DSL_VERSION}");
    let _ = writeln!(s, "library {} {}", lib.id(), lib.hash());
    let _ = writeln!(s, "preprocess {}", model.preprocessing.name());
    let _ = writeln!(s, "inputs {}", graph.iota);
    for node in &graph.nodes {
        let f = lib.get(node.function).expect("decoded function exists");
        let srcs: Vec<String> = node.inputs.iter().map(|a| a.to_string()).collect();
        let _ = write!(s, "node {} {} {}", node.address, f.name, srcs.join(","));
        for (k, v) in named_args(f, &node.params) {
            let _ = write!(s, " {k}={v}");
        }
        s.push('\n');
    }
    for (k, a) in graph.outputs.iter().enumerate() {
        let _ = writeln!(s, "output {} {}", k + 1, a);
    }
    match model.aggregation {
        Aggregation::Mean => s.push_str("aggregate mean\n"),
    }
    let _ = write!(s, "endpoint {}", model.endpoint.name());
    for (k, v) in endpoint_fields(&model.endpoint) {
        let _ = write!(s, " {k}={v}");
    }
    s.push('\n');
    s
}

fn py_call(name: &str, a: &str, b: &str, args: &[u32]) -> String {
    let p = |i: usize| args.get(i).copied().unwrap_or(0);
    match name {
        "max" => format!("np.maximum({a}, {b})"),
        "min" => format!("np.minimum({a}, {b})"),
        "mean" => format!("((u16({a}) + {b}) // 2).astype(np.uint8)"),
        "add" => format!("cv2.add({a}, {b})"),
        "sub" => format!("cv2.subtract({a}, {b})"),
        "abs_diff" => format!("cv2.absdiff({a}, {b})"),
        "multiply" => format!("((u32({a}) * {b} + 127) // 255).astype(np.uint8)"),
        "not" => format!("cv2.bitwise_not({a})"),
        "and" => format!("cv2.bitwise_and({a}, {b})"),
        "or" => format!("cv2.bitwise_or({a}, {b})"),
        "xor" => format!("cv2.bitwise_xor({a}, {b})"),
        "shift_left" => format!("np.minimum(u32({a}) << {}, 255).astype(np.uint8)", p(0)),
        "shift_right" => format!("{a} >> {}", p(0)),
        "square" => format!("np.minimum(u32({a}) ** 2, 255).astype(np.uint8)"),
        "pow2_scaled" => format!("((u32({a}) ** 2 + 127) // 255).astype(np.uint8)"),
        "sqrt" => format!("np.round(np.sqrt({a} * 255.0)).astype(np.uint8)"),
        "gaussian_blur" => format!(
            "cv2.GaussianBlur({a}, ({k}, {k}), 0, borderType=cv2.BORDER_REFLECT_101)",
            k = p(0)
        ),
        "median_blur" => format!("median_blur({a}, {})", p(0)),
        "box_blur" => format!(
            "cv2.blur({a}, ({k}, {k}), borderType=cv2.BORDER_REFLECT_101)",
            k = p(0)
        ),
        "laplacian" => format!("cv2.convertScaleAbs(cv2.Laplacian({a}, cv2.CV_16S, ksize=1))"),
        "sobel" => format!("gradient_magnitude({a}, 'sobel')"),
        "sobel_x" => format!("cv2.convertScaleAbs(cv2.Sobel({a}, cv2.CV_16S, 1, 0))"),
        "sobel_y" => format!("cv2.convertScaleAbs(cv2.Sobel({a}, cv2.CV_16S, 0, 1))"),
        "scharr" => format!("gradient_magnitude({a}, 'scharr')"),
        "kirsch" => format!("kirsch({a})"),
        "canny" => format!("cv2.Canny({a}, {}, {})", p(0), p(1)),
        "erode" => format!("cv2.erode({a}, square({}))", p(0)),
        "dilate" => format!("cv2.dilate({a}, square({}))", p(0)),
        "open" => format!("cv2.morphologyEx({a}, cv2.MORPH_OPEN, square({}))", p(0)),
        "close" => format!("cv2.morphologyEx({a}, cv2.MORPH_CLOSE, square({}))", p(0)),
        "morph_gradient" => format!("cv2.morphologyEx({a}, cv2.MORPH_GRADIENT, square({}))", p(0)),
        "top_hat" => format!("cv2.morphologyEx({a}, cv2.MORPH_TOPHAT, square({}))", p(0)),
        "black_hat" => format!("cv2.morphologyEx({a}, cv2.MORPH_BLACKHAT, square({}))", p(0)),
        "fill_holes" => format!("(ndi.binary_fill_holes({a} > 0) * 255).astype(np.uint8)"),
        "remove_small_objects" => format!("remove_small_objects({a}, {})", p(0)),
        "threshold" => format!("cv2.threshold({a}, {}, 255, cv2.THRESH_BINARY)[1]", p(0)),
        "threshold_to_zero" => format!("cv2.threshold({a}, {}, 255, cv2.THRESH_TOZERO)[1]", p(0)),
        "otsu_threshold" => format!("cv2.threshold({a}, 0, 255, cv2.THRESH_BINARY + cv2.THRESH_OTSU)[1]"),
        "adaptive_threshold" => format!(
            "cv2.adaptiveThreshold({a}, 255, cv2.ADAPTIVE_THRESH_MEAN_C, cv2.THRESH_BINARY, {}, {})",
            p(0).max(3),
            (p(1) as f64 - 128.0) / 8.0
        ),
        "min_max_normalize" => format!("cv2.normalize({a}, None, 0, 255, cv2.NORM_MINMAX)"),
        "distance_transform" => format!("distance_map({a})"),
        "local_binary_pattern" => format!("lbp({a})"),
        other => format!("unsupported_{other}({a})"),
    }
}

const PY_PRELUDE: &str = r#"import sys

import cv2
import numpy as np
from scipy import ndimage as ndi
from skimage import color, feature, segmentation


def u16(x):
    return x.astype(np.uint16)


def u32(x):
    return x.astype(np.uint32)


def square(k):
    return np.ones((k, k), np.uint8)


def median_blur(x, k):
    return ndi.median_filter(x, size=k, mode="nearest") if k > 1 else x.copy()


def gradient_magnitude(x, kind):
    if kind == "scharr":
        gx = cv2.Scharr(x, cv2.CV_32F, 1, 0)
        gy = cv2.Scharr(x, cv2.CV_32F, 0, 1)
        scale = 0.25
    else:
        gx = cv2.Sobel(x, cv2.CV_32F, 1, 0)
        gy = cv2.Sobel(x, cv2.CV_32F, 0, 1)
        scale = 1.0
    return np.clip(np.round(np.hypot(gx, gy) * scale), 0, 255).astype(np.uint8)


def kirsch(x):
    base = np.array([[5, 5, 5], [-3, 0, -3], [-3, -3, -3]], np.float32)
    out = np.zeros(x.shape, np.float32)
    k = base
    for _ in range(8):
        out = np.maximum(out, cv2.filter2D(x.astype(np.float32), -1, k))
        ring = [k[0, 0], k[0, 1], k[0, 2], k[1, 2], k[2, 2], k[2, 1], k[2, 0], k[1, 0]]
        ring = ring[-1:] + ring[:-1]
        k = np.array([[ring[0], ring[1], ring[2]], [ring[7], 0, ring[3]], [ring[6], ring[5], ring[4]]], np.float32)
    return np.clip(out / 15.0, 0, 255).astype(np.uint8)


def remove_small_objects(x, min_area):
    n, lab, stats, _ = cv2.connectedComponentsWithStats((x > 0).astype(np.uint8), connectivity=8)
    small = np.zeros(n, bool)
    small[1:] = stats[1:, cv2.CC_STAT_AREA] < min_area
    out = x.copy()
    out[small[lab]] = 0
    return out


def distance_map(x):
    dt = ndi.distance_transform_edt(x > 0)
    peak = dt.max()
    if peak <= 0:
        return np.zeros_like(x)
    return np.round(dt / peak * 255).astype(np.uint8)


def lbp(x):
    h, w = x.shape
    p = np.pad(x, 1, mode="edge").astype(np.int16)
    c = p[1:-1, 1:-1]
    code = np.zeros((h, w), np.uint8)
    order = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)]
    for bit, (dx, dy) in enumerate(order):
        code |= ((p[1 + dy:h + 1 + dy, 1 + dx:w + 1 + dx] >= c).astype(np.uint8) << bit)
    return code


def hed(rgb):
    d = np.clip(color.rgb2hed(rgb), 0, None)
    ceiling = np.clip(color.hed_from_rgb, 0, None).sum(axis=0)
    d = np.minimum(d, ceiling)
    return [np.round(255 * d[..., j] / ceiling[j]).astype(np.uint8) for j in range(3)]


def smoothed_dt(mask, sigma):
    return ndi.gaussian_filter(ndi.distance_transform_edt(mask), sigma, truncate=4.0)
"#;

fn py_preprocess(model: &PipelineModel) -> String {
    use crate::imgops::PreprocessingSpec as P;
    match &model.preprocessing {
        P::RgbSplit => "    rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)\n    channels = [rgb[..., 0], rgb[..., 1], rgb[..., 2]]\n".into(),
        P::Hsv => "    hsv = cv2.cvtColor(img, cv2.COLOR_BGR2HSV_FULL)\n    channels = [hsv[..., 0], hsv[..., 1], hsv[..., 2]]\n".into(),
        P::Hed => "    channels = hed(cv2.cvtColor(img, cv2.COLOR_BGR2RGB))\n".into(),
        P::Grayscale => "    channels = [img if img.ndim == 2 else cv2.cvtColor(img, cv2.COLOR_BGR2GRAY)]\n".into(),
        P::ChannelSelect { channels } => {
            let idx: Vec<String> = channels.iter().map(|c| c.to_string()).collect();
            format!(
                "    planes = [img] if img.ndim == 2 else [img[..., i] for i in range(img.shape[2])]\n    channels = [planes[i] for i in ({},)]\n",
                idx.join(", ")
            )
        }
    }
}

fn py_endpoint(e: &EndpointSpec) -> String {
    match *e {
        EndpointSpec::ThresholdBinary { sigma } => {
            format!("    return np.where(z[0] > {sigma}, 255, 0).astype(np.uint8)\n")
        }
        EndpointSpec::ThresholdToZero { sigma } => {
            format!("    return np.where(z[0] > {sigma}, z[0], 0).astype(np.uint8)\n")
        }
        EndpointSpec::ConnectedComponents => {
            "    return cv2.connectedComponents((z[0] > 0).astype(np.uint8), connectivity=8)[1]\n".into()
        }
        EndpointSpec::MarkerControlledWatershed { sigma, threshold } => format!(
            "    mask = z[0] > {threshold}\n    markers = ndi.label((z[1] > 0) & mask, structure=np.ones((3, 3)))[0]\n    return segmentation.watershed(-smoothed_dt(mask, {sigma}), markers, mask=mask)\n"
        ),
        EndpointSpec::LocalMaxWatershed {
            sigma,
            min_peak_distance,
            threshold,
        } => format!(
            "    mask = z[0] > {threshold}\n    dt = ndi.distance_transform_edt(mask)\n    peaks = feature.peak_local_max(dt, min_distance={min_peak_distance}, threshold_abs=1, labels=mask.astype(int))\n    markers = np.zeros(mask.shape, np.int32)\n    markers[tuple(peaks.T)] = np.arange(1, len(peaks) + 1)\n    gy, gx = np.gradient(dt)\n    topo = ndi.gaussian_filter(np.hypot(gx, gy), {sigma}, truncate=4.0)\n    return segmentation.watershed(topo, markers, mask=mask)\n"
        ),
        EndpointSpec::HoughCircle {
            radius_min,
            radius_max,
            threshold,
            min_center_distance,
            ..
        } => format!(
            "    edges = (z[0] > {threshold}).astype(np.uint8) * 255\n    circles = cv2.HoughCircles(edges, cv2.HOUGH_GRADIENT, 1, {mcd}, param1=100, param2=10, minRadius={radius_min}, maxRadius={radius_max})\n    out = np.zeros(edges.shape, np.int32)\n    for k, (x, y, r) in enumerate([] if circles is None else circles[0]):\n        cv2.circle(out, (int(round(x)), int(round(y))), int(round(r)), k + 1, -1)\n    return out\n",
            mcd = min_center_distance.unwrap_or(radius_min as f64)
        ),
    }
}

/// Standalone Python (OpenCV, SciPy, scikit-image) rendition of the model.
/// It mirrors the pipeline with common library calls; border handling and
/// rounding of some primitives may differ from the native implementation.
pub fn to_python(model: &PipelineModel) -> String {
    let lib = model.library();
    let graph = model.graph();
    let mut s = String::new();
    s.push_str("# Generated pipeline\n");
    for line in to_dsl(model).lines() {
        let _ = writeln!(s, "#   {line}");
    }
    s.push('\n');
    s.push_str(PY_PRELUDE);
    s.push_str("\n\ndef heuristics(channels):\n");
    for i in 1..=graph.iota {
        let _ = writeln!(s, "    v{i} = channels[{}]", i - 1);
    }
    for node in &graph.nodes {
        let f = lib.get(node.function).expect("decoded function exists");
        let var = |k: usize| {
            node.inputs
                .get(k)
                .map(|a| format!("v{a}"))
                .unwrap_or_default()
        };
        let args: Vec<u32> = f.map_params(&node.params);
        let _ = writeln!(
            s,
            "    v{} = {}",
            node.address,
            py_call(f.name, &var(0), &var(1), &args)
        );
    }
    let outs: Vec<String> = graph.outputs.iter().map(|a| format!("v{a}")).collect();
    let _ = writeln!(s, "    return [{}]", outs.join(", "));
    s.push_str("\n\ndef endpoint(z):\n");
    s.push_str(&py_endpoint(&model.endpoint));
    s.push_str("\n\ndef run(img):\n");
    s.push_str(&py_preprocess(model));
    s.push_str("    return endpoint(heuristics(channels))\n");
    s.push_str(
        "\n\nif __name__ == \"__main__\":\n    image = cv2.imread(sys.argv[1], cv2.IMREAD_UNCHANGED)\n    result = run(image)\n    cv2.imwrite(sys.argv[2], result.astype(np.uint16 if result.max() > 255 else np.uint8))\n",
    );
    s
}
