//! Two-branch observation encoder. Camera frames pass through two strided
//! convolutions and a projection; the kinematic/tactile vector passes through
//! a two-layer MLP; the branches are concatenated and fused by another
//! two-layer MLP into one feature vector. Built without the image branch it
//! degenerates to the vector MLP plus fusion, which suits vectors-only tasks.

use super::layers::{conv_out_side, relu, relu_backward, Conv2, Dense};
use super::{NnError, Param};
use rand::Rng;

/// Architecture description; all width choices live in the caller's config.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    /// Camera frame (height, width); `None` builds a vectors-only encoder.
    pub image: Option<(usize, usize)>,
    pub vec_dim: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub img_feat: usize,
    pub vec_hidden: usize,
    pub fusion_hidden: usize,
}

/// Image channels are fixed: RGB in, planes-major.
pub const IMG_CHANNELS: usize = 3;

struct ImgBranch {
    conv1: Conv2,
    conv2: Conv2,
    proj: Dense,
    h: usize,
    w: usize,
}

pub struct Encoder {
    img: Option<ImgBranch>,
    v1: Dense,
    v2: Dense,
    f1: Dense,
    f2: Dense,
    spec: EncoderSpec,
}

/// Forward activations needed by the backward pass. Post-activation values
/// double as rectifier masks.
pub struct EncCache {
    img: Option<ImgCache>,
    vec_in: Vec<f64>,
    v1o: Vec<f64>,
    v2o: Vec<f64>,
    fin: Vec<f64>,
    f1o: Vec<f64>,
    pub feat: Vec<f64>,
}

struct ImgCache {
    x: Vec<f64>,
    c1o: Vec<f64>,
    c2o: Vec<f64>,
    proj_o: Vec<f64>,
}

impl Encoder {
    pub fn new<R: Rng>(name: &str, spec: &EncoderSpec, rng: &mut R) -> Encoder {
        let img = spec.image.map(|(h, w)| {
            let conv1 = Conv2::new(&format!("{name}.conv1"), IMG_CHANNELS, spec.conv1, rng);
            let conv2 = Conv2::new(&format!("{name}.conv2"), spec.conv1, spec.conv2, rng);
            let flat = spec.conv2 * conv_out_side(conv_out_side(h)) * conv_out_side(conv_out_side(w));
            let proj = Dense::new(&format!("{name}.img_proj"), flat, spec.img_feat, rng);
            ImgBranch { conv1, conv2, proj, h, w }
        });
        let v1 = Dense::new(&format!("{name}.vec1"), spec.vec_dim, spec.vec_hidden, rng);
        let v2 = Dense::new(&format!("{name}.vec2"), spec.vec_hidden, spec.vec_hidden, rng);
        let fusion_in =
            spec.vec_hidden + if spec.image.is_some() { spec.img_feat } else { 0 };
        let f1 = Dense::new(&format!("{name}.fuse1"), fusion_in, spec.fusion_hidden, rng);
        let f2 = Dense::new(&format!("{name}.fuse2"), spec.fusion_hidden, spec.fusion_hidden, rng);
        Encoder { img, v1, v2, f1, f2, spec: spec.clone() }
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn out_dim(&self) -> usize {
        self.spec.fusion_hidden
    }

    /// Consumes a planes-major RGB frame (when built with one) and the
    /// observation vector; returns the fused feature and the cache the
    /// backward pass needs.
    pub fn forward(&self, img: Option<&[f32]>, vec: &[f64]) -> Result<EncCache, NnError> {
        if vec.len() != self.spec.vec_dim {
            return Err(NnError::Shape { what: "encoder vector input", got: vec.len(), want: self.spec.vec_dim });
        }
        let img_cache = match (&self.img, img) {
            (Some(branch), Some(px)) => {
                let want = IMG_CHANNELS * branch.h * branch.w;
                if px.len() != want {
                    return Err(NnError::Shape { what: "encoder image input", got: px.len(), want });
                }
                let x: Vec<f64> = px.iter().map(|&v| v as f64).collect();
                let mut c1o = Vec::new();
                branch.conv1.forward(&x, branch.h, branch.w, &mut c1o);
                relu(&mut c1o);
                let (h1, w1) = (conv_out_side(branch.h), conv_out_side(branch.w));
                let mut c2o = Vec::new();
                branch.conv2.forward(&c1o, h1, w1, &mut c2o);
                relu(&mut c2o);
                let mut proj_o = Vec::new();
                branch.proj.forward(&c2o, &mut proj_o);
                relu(&mut proj_o);
                Some(ImgCache { x, c1o, c2o, proj_o })
            }
            (None, None) => None,
            (Some(_), None) => {
                return Err(NnError::Shape { what: "encoder image input", got: 0, want: 1 })
            }
            (None, Some(_)) => {
                return Err(NnError::Shape { what: "encoder image input", got: 1, want: 0 })
            }
        };

        let mut v1o = Vec::new();
        self.v1.forward(vec, &mut v1o);
        relu(&mut v1o);
        let mut v2o = Vec::new();
        self.v2.forward(&v1o, &mut v2o);
        relu(&mut v2o);

        let mut fin = Vec::new();
        if let Some(ic) = &img_cache {
            fin.extend_from_slice(&ic.proj_o);
        }
        fin.extend_from_slice(&v2o);
        let mut f1o = Vec::new();
        self.f1.forward(&fin, &mut f1o);
        relu(&mut f1o);
        let mut feat = Vec::new();
        self.f2.forward(&f1o, &mut feat);
        relu(&mut feat);

        Ok(EncCache { img: img_cache, vec_in: vec.to_vec(), v1o, v2o, fin, f1o, feat })
    }

    /// Accumulates parameter gradients from a gradient on the output feature.
    pub fn backward(&mut self, cache: &EncCache, dfeat: &[f64]) {
        let mut df = dfeat.to_vec();
        relu_backward(&cache.feat, &mut df);
        let mut df1 = vec![0.0; cache.f1o.len()];
        self.f2.backward(&cache.f1o, &df, Some(&mut df1));
        relu_backward(&cache.f1o, &mut df1);
        let mut dfin = vec![0.0; cache.fin.len()];
        self.f1.backward(&cache.fin, &df1, Some(&mut dfin));

        let (dimg, dvec) = match &cache.img {
            Some(ic) => dfin.split_at(ic.proj_o.len()),
            None => (&[][..], &dfin[..]),
        };

        let mut dv2 = dvec.to_vec();
        relu_backward(&cache.v2o, &mut dv2);
        let mut dv1 = vec![0.0; cache.v1o.len()];
        self.v2.backward(&cache.v1o, &dv2, Some(&mut dv1));
        relu_backward(&cache.v1o, &mut dv1);
        self.v1.backward(&cache.vec_in, &dv1, None);

        if let (Some(branch), Some(ic)) = (&mut self.img, &cache.img) {
            let mut dproj = dimg.to_vec();
            relu_backward(&ic.proj_o, &mut dproj);
            let mut dc2 = vec![0.0; ic.c2o.len()];
            branch.proj.backward(&ic.c2o, &dproj, Some(&mut dc2));
            relu_backward(&ic.c2o, &mut dc2);
            let (h1, w1) = (conv_out_side(branch.h), conv_out_side(branch.w));
            let mut dc1 = vec![0.0; ic.c1o.len()];
            branch.conv2.backward(&ic.c1o, h1, w1, &dc2, Some(&mut dc1));
            relu_backward(&ic.c1o, &mut dc1);
            branch.conv1.backward(&ic.x, branch.h, branch.w, &dc1, None);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = Vec::new();
        if let Some(b) = &mut self.img {
            v.extend(b.conv1.params_mut());
            v.extend(b.conv2.params_mut());
            v.extend(b.proj.params_mut());
        }
        v.extend(self.v1.params_mut());
        v.extend(self.v2.params_mut());
        v.extend(self.f1.params_mut());
        v.extend(self.f2.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut v = Vec::new();
        if let Some(b) = &self.img {
            v.extend(b.conv1.params());
            v.extend(b.conv2.params());
            v.extend(b.proj.params());
        }
        v.extend(self.v1.params());
        v.extend(self.v2.params());
        v.extend(self.f1.params());
        v.extend(self.f2.params());
        v
    }
}

#[cfg(test)]
mod tests {
    use super::super::max_grad_rel_err;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn tiny_spec() -> EncoderSpec {
        EncoderSpec {
            image: Some((6, 6)),
            vec_dim: 4,
            conv1: 2,
            conv2: 3,
            img_feat: 5,
            vec_hidden: 4,
            fusion_hidden: 6,
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let enc = Encoder::new("enc", &tiny_spec(), &mut rng);
        let img = vec![0.5f32; 3 * 6 * 6];
        let vec_in = [0.1, -0.2, 0.3, -0.4];
        let a = enc.forward(Some(&img), &vec_in).unwrap();
        let b = enc.forward(Some(&img), &vec_in).unwrap();
        assert_eq!(a.feat.len(), 6);
        assert_eq!(a.feat, b.feat);
        assert!(a.feat.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn input_shape_errors_are_reported() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let enc = Encoder::new("enc", &tiny_spec(), &mut rng);
        let img = vec![0.5f32; 3 * 6 * 6];
        assert!(enc.forward(Some(&img), &[0.0; 3]).is_err());
        assert!(enc.forward(Some(&img[..10]), &[0.0; 4]).is_err());
        assert!(enc.forward(None, &[0.0; 4]).is_err());

        let mut spec = tiny_spec();
        spec.image = None;
        let enc = Encoder::new("enc", &spec, &mut rng);
        assert!(enc.forward(Some(&img), &[0.0; 4]).is_err());
        assert!(enc.forward(None, &[0.0; 4]).is_ok());
    }

    #[test]
    fn encoder_gradients_match_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut enc = Encoder::new("enc", &tiny_spec(), &mut rng);
        let img: Vec<f32> = (0..3 * 6 * 6).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let vec_in: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let cache = enc.forward(Some(&img), &vec_in).unwrap();
        let dfeat = vec![1.0; cache.feat.len()];
        enc.backward(&cache, &dfeat);

        struct M {
            enc: Encoder,
            img: Vec<f32>,
            vec_in: Vec<f64>,
        }
        let mut m = M { enc, img, vec_in };
        let worst = max_grad_rel_err(
            &mut m,
            |m| m.enc.params_mut(),
            |m| m.enc.forward(Some(&m.img), &m.vec_in).unwrap().feat.iter().sum(),
            1e-5,
        );
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn vectors_only_encoder_gradients_match_central_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut spec = tiny_spec();
        spec.image = None;
        let mut enc = Encoder::new("enc", &spec, &mut rng);
        let vec_in: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cache = enc.forward(None, &vec_in).unwrap();
        let dfeat = vec![1.0; cache.feat.len()];
        enc.backward(&cache, &dfeat);

        struct M {
            enc: Encoder,
            vec_in: Vec<f64>,
        }
        let mut m = M { enc, vec_in };
        let worst = max_grad_rel_err(
            &mut m,
            |m| m.enc.params_mut(),
            |m| m.enc.forward(None, &m.vec_in).unwrap().feat.iter().sum(),
            1e-5,
        );
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
