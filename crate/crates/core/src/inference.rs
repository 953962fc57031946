//! Content embeddings and convolutional feature maps.
//!
//! Two modes produce them: running a pre-trained CNN in ONNX interchange
//! format through an embedded inference runtime, or loading precomputed
//! `IFTENSR1` tensors referenced by `icon_ref`. The second mode lets the
//! whole engine run with zero model dependencies.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::tensor::Tensor;

/// Per-channel RGB means subtracted during preprocessing (0..=255 scale).
pub const IMAGENET_MEANS: [f32; 3] = [123.68, 116.779, 103.939];

/// Default model input edge (VGG-class networks fix their input size).
pub const DEFAULT_INPUT_SIZE: usize = 224;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_path: PathBuf,
    /// Layer producing the content embedding (the last fully connected layer).
    #[serde(default = "default_content_output")]
    pub content_output: String,
    /// Layer producing the style feature map (first conv layer of block 5).
    #[serde(default = "default_style_output")]
    pub style_output: String,
    #[serde(default = "default_content_dim")]
    pub content_dim: usize,
    #[serde(default = "default_style_channels")]
    pub style_channels: usize,
    #[serde(default = "default_input_size")]
    pub input_size: usize,
}

fn default_content_output() -> String {
    "fc7".to_string()
}
fn default_style_output() -> String {
    "conv5_1".to_string()
}
fn default_content_dim() -> usize {
    4096
}
fn default_style_channels() -> usize {
    512
}
fn default_input_size() -> usize {
    DEFAULT_INPUT_SIZE
}

impl ModelSpec {
    pub fn new(model_path: impl Into<PathBuf>) -> Self {
        ModelSpec {
            model_path: model_path.into(),
            content_output: default_content_output(),
            style_output: default_style_output(),
            content_dim: default_content_dim(),
            style_channels: default_style_channels(),
            input_size: default_input_size(),
        }
    }
}

/// Filter responses of one convolutional layer: `channels` rows of
/// `spatial` (height x width) activations.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    values: Tensor,
}

impl FeatureMap {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.ndim() != 2 {
            return Err(Error::Shape(format!(
                "feature map must be 2-d (channels x spatial), got {:?}",
                values.dims()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Validation("feature map contains NaN/Inf".into()));
        }
        Ok(FeatureMap { values })
    }

    pub fn channels(&self) -> usize {
        self.values.dims()[0]
    }

    pub fn spatial(&self) -> usize {
        self.values.dims()[1]
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }
}

/// Decode-independent preprocessing: bilinear resize to the model input
/// size, RGB channel order, ImageNet mean subtraction. Output is a planar
/// 3 x H x W tensor.
pub fn preprocess_image(raster: &Raster, input_size: usize) -> Tensor {
    let resized = raster.resize_bilinear(input_size, input_size);
    let hw = input_size * input_size;
    let mut out = vec![0.0f32; 3 * hw];
    for (i, px) in resized.data.chunks_exact(3).enumerate() {
        out[i] = px[0] - IMAGENET_MEANS[0];
        out[hw + i] = px[1] - IMAGENET_MEANS[1];
        out[2 * hw + i] = px[2] - IMAGENET_MEANS[2];
    }
    Tensor::new(vec![3, input_size, input_size], out).expect("shape fixed")
}

pub fn preprocess_image_file(path: impl AsRef<Path>, input_size: usize) -> Result<Tensor> {
    Ok(preprocess_image(&Raster::decode_file(path)?, input_size))
}

/// Load a precomputed feature map. 2-d tensors are taken verbatim as
/// channels x spatial; 3-d [C,H,W] and 4-d [1,C,H,W] collapse their spatial
/// axes. The channel count must match `style_channels` exactly.
pub fn load_feature_map(path: impl AsRef<Path>, style_channels: usize) -> Result<FeatureMap> {
    let t = crate::tensor::read_tensor(&path)?;
    let f = feature_map_from_tensor(t)?;
    if f.channels() != style_channels {
        return Err(Error::Shape(format!(
            "{}: feature map has {} channels, configuration wants {}",
            path.as_ref().display(),
            f.channels(),
            style_channels
        )));
    }
    Ok(f)
}

pub fn feature_map_from_tensor(t: Tensor) -> Result<FeatureMap> {
    let dims = t.dims().to_vec();
    let t = match dims.as_slice() {
        [_, _] => t,
        [c, h, w] => t.reshape(vec![*c, h * w])?,
        [1, c, h, w] => t.reshape(vec![*c, h * w])?,
        other => {
            return Err(Error::Shape(format!(
                "cannot interpret tensor {other:?} as a feature map"
            )))
        }
    };
    FeatureMap::new(t)
}

/// Load a precomputed content vector (1-d, or [1,d] collapsed).
pub fn load_content_vector(path: impl AsRef<Path>, content_dim: usize) -> Result<Tensor> {
    let t = crate::tensor::read_tensor(&path)?;
    let t = match t.dims() {
        [_] => t,
        [1, d] => {
            let d = *d;
            t.reshape(vec![d])?
        }
        other => {
            return Err(Error::Shape(format!(
                "content tensor must be a vector, got {other:?}"
            )))
        }
    };
    if t.len() != content_dim {
        return Err(Error::Shape(format!(
            "{}: content vector has dim {}, configuration wants {content_dim}",
            path.as_ref().display(),
            t.len()
        )));
    }
    Ok(t)
}

/// True when an icon_ref points at a precomputed tensor rather than an image.
pub fn is_tensor_ref(icon_ref: &str) -> bool {
    icon_ref.ends_with(".iftensr")
}

/// Sibling path convention for precomputed content vectors:
/// `maps/app.iftensr` -> `maps/app.content.iftensr`.
pub fn content_sibling(icon_ref: &str) -> Option<PathBuf> {
    icon_ref
        .strip_suffix(".iftensr")
        .map(|stem| PathBuf::from(format!("{stem}.content.iftensr")))
}

#[cfg(feature = "onnx")]
pub use onnx_runtime::OnnxModel;

#[cfg(feature = "onnx")]
mod onnx_runtime {
    use super::*;
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex};
    use tract_onnx::prelude::*;

    type Runnable = SimplePlan<TypedFact, Box<dyn TypedOp>, Graph<TypedFact, Box<dyn TypedOp>>>;

    /// A loaded ONNX graph plus per-layer compiled plans. The handle is
    /// shareable read-only; inference calls may run in parallel.
    pub struct OnnxModel {
        spec: ModelSpec,
        proto: tract_onnx::pb::ModelProto,
        plans: Mutex<HashMap<String, Arc<Runnable>>>,
    }

    impl OnnxModel {
        pub fn load(spec: ModelSpec) -> Result<Self> {
            let proto = tract_onnx::onnx()
                .proto_model_for_path(&spec.model_path)
                .map_err(|e| Error::Inference(format!(
                    "loading {}: {e}",
                    spec.model_path.display()
                )))?;
            Ok(OnnxModel { spec, proto, plans: Mutex::new(HashMap::new()) })
        }

        pub fn spec(&self) -> &ModelSpec {
            &self.spec
        }

        fn plan_for(&self, output: &str) -> Result<Arc<Runnable>> {
            if let Some(p) = self.plans.lock().unwrap().get(output) {
                return Ok(p.clone());
            }
            let mut model = tract_onnx::onnx()
                .model_for_proto_model(&self.proto)
                .map_err(|e| Error::Inference(format!("parsing model graph: {e}")))?;
            let n = self.spec.input_size;
            model
                .set_input_fact(0, f32::fact([1, 3, n, n]).into())
                .map_err(|e| Error::Inference(format!("setting input shape: {e}")))?;
            model = model.with_output_names(&[output]).map_err(|_| {
                Error::Config(format!(
                    "layer {output:?} not found in {}",
                    self.spec.model_path.display()
                ))
            })?;
            let plan = model
                .into_optimized()
                .and_then(|m| m.into_runnable())
                .map_err(|e| Error::Inference(format!("compiling up to {output:?}: {e}")))?;
            let plan = Arc::new(plan);
            self.plans.lock().unwrap().insert(output.to_string(), plan.clone());
            Ok(plan)
        }

        fn run(&self, output: &str, input: &Tensor) -> Result<Tensor> {
            let dims = input.dims();
            if dims.len() != 3 {
                return Err(Error::Shape(format!(
                    "model input must be 3 x H x W, got {dims:?}"
                )));
            }
            let plan = self.plan_for(output)?;
            let arr = tract_ndarray::Array4::from_shape_vec(
                (1, dims[0], dims[1], dims[2]),
                input.data().to_vec(),
            )
            .map_err(|e| Error::Shape(e.to_string()))?;
            let outputs = plan
                .run(tvec!(arr.into_tensor().into_tvalue()))
                .map_err(|e| Error::Inference(format!("running {output:?}: {e}")))?;
            let view = outputs[0]
                .to_array_view::<f32>()
                .map_err(|e| Error::Inference(format!("non-f32 output at {output:?}: {e}")))?;
            let mut shape: Vec<usize> = view.shape().to_vec();
            // Strip the batch axis.
            if shape.first() == Some(&1) && shape.len() > 1 {
                shape.remove(0);
            }
            let data: Vec<f32> = view.iter().copied().collect();
            Tensor::new(shape, data)
        }

        /// Activations at the content layer, flattened to a vector.
        pub fn extract_content(&self, input: &Tensor) -> Result<Tensor> {
            let out = self.run(&self.spec.content_output, input)?;
            let len = out.len();
            if len != self.spec.content_dim {
                return Err(Error::Config(format!(
                    "content layer {:?} produced {len} values, configuration wants {}",
                    self.spec.content_output, self.spec.content_dim
                )));
            }
            let out = out.reshape(vec![len])?;
            if !out.is_finite() {
                return Err(Error::Inference("content embedding contains NaN/Inf".into()));
            }
            Ok(out)
        }

        /// Activations at the style layer as a channels x spatial map.
        pub fn extract_feature_map(&self, input: &Tensor) -> Result<FeatureMap> {
            let out = self.run(&self.spec.style_output, input)?;
            let f = feature_map_from_tensor(out)?;
            if f.channels() != self.spec.style_channels {
                return Err(Error::Config(format!(
                    "style layer {:?} has {} channels, configuration wants {}",
                    self.spec.style_output,
                    f.channels(),
                    self.spec.style_channels
                )));
            }
            Ok(f)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preprocess_shapes_to_3x224x224() {
        let t = preprocess_image(&Raster::constant(300, 300, [50.0, 60.0, 70.0]), 224);
        assert_eq!(t.dims(), &[3, 224, 224]);
    }

    #[test]
    fn preprocess_zero_image_is_negated_means() {
        let t = preprocess_image(&Raster::constant(10, 10, [0.0, 0.0, 0.0]), 8);
        let hw = 64;
        for c in 0..3 {
            for i in 0..hw {
                assert_eq!(t.data()[c * hw + i], -IMAGENET_MEANS[c]);
            }
        }
    }

    #[test]
    fn preprocess_red_pixel_constant_channels() {
        let t = preprocess_image(&Raster::constant(1, 1, [255.0, 0.0, 0.0]), 224);
        let hw = 224 * 224;
        for i in 0..hw {
            assert!((t.data()[i] - 131.32).abs() < 1e-4);
            assert_eq!(t.data()[hw + i], -116.779);
            assert_eq!(t.data()[2 * hw + i], -103.939);
        }
    }

    #[test]
    fn precomputed_feature_map_loaded_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("app.iftensr");
        let data: Vec<f32> = (0..512 * 196).map(|i| (i % 97) as f32 * 0.01).collect();
        crate::tensor::write_tensor(&Tensor::matrix(512, 196, data.clone()).unwrap(), &p).unwrap();
        let f = load_feature_map(&p, 512).unwrap();
        assert_eq!((f.channels(), f.spatial()), (512, 196));
        assert_eq!(f.values().data(), &data[..]);
    }

    #[test]
    fn feature_map_channel_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.iftensr");
        crate::tensor::write_tensor(&Tensor::matrix(8, 4, vec![0.0; 32]).unwrap(), &p).unwrap();
        assert!(matches!(load_feature_map(&p, 512), Err(Error::Shape(_))));
    }

    #[test]
    fn spatial_axes_collapse() {
        let t = Tensor::new(vec![1, 4, 3, 5], vec![1.0; 60]).unwrap();
        let f = feature_map_from_tensor(t).unwrap();
        assert_eq!((f.channels(), f.spatial()), (4, 15));
    }

    #[test]
    fn content_sibling_convention() {
        assert_eq!(
            content_sibling("maps/app1.iftensr").unwrap(),
            PathBuf::from("maps/app1.content.iftensr")
        );
        assert!(content_sibling("icons/app1.png").is_none());
        assert!(is_tensor_ref("x.iftensr"));
        assert!(!is_tensor_ref("x.png"));
    }
}
