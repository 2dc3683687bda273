use std::collections::HashMap;

use hkcd_model::gradcheck::{check_gradients, GradCheckConfig, GradCheckReport};
use hkcd_model::params::{Init, ParamStore};
use hkcd_model::{weighted_cross_entropy, DType, Ffm, Hcdn, HvMode, LossConfig, ModelConfig, Tensor, Var};

fn randn(shape: &[usize], seed: u64, dtype: DType) -> Tensor {
    let mut s = ParamStore::new(DType::F64, seed);
    let t = s.create("t", shape, Init::Normal { std: 1.0 }).unwrap().as_tensor().to_dtype(dtype).unwrap();
    // round through the narrower type so both precisions see the same values
    t.to_dtype(DType::F32).unwrap().to_dtype(dtype).unwrap()
}

fn binary_mask(shape: &[usize], seed: u64, dtype: DType) -> Tensor {
    randn(shape, seed, DType::F64).ge(0.3).unwrap().to_dtype(dtype).unwrap()
}

fn toy_config() -> ModelConfig {
    ModelConfig {
        zero_init_residual: false,
        pretrained_branch_frozen: false,
        init_seed: 11,
        ..ModelConfig::toy()
    }
}

struct FfmCase {
    ffm: Ffm,
    store: ParamStore,
    h_c: Tensor,
    h_f: Var,
    readout: Tensor,
}

fn ffm_case(dtype: DType) -> FfmCase {
    let mut store = ParamStore::new(dtype, 3);
    let ffm = Ffm::new(&mut store, "ffm", 4, 2, 1, HvMode::Attention, false).unwrap();
    let reference = {
        let mut s = ParamStore::new(DType::F32, 3);
        Ffm::new(&mut s, "ffm", 4, 2, 1, HvMode::Attention, false).unwrap();
        s.snapshot().into_iter().collect::<HashMap<_, _>>()
    };
    store.assign(&reference, "", true).unwrap();
    FfmCase {
        ffm,
        store,
        h_c: randn(&[1, 4, 4, 4], 21, dtype),
        h_f: Var::from_tensor(&randn(&[1, 4, 4, 4], 22, dtype)).unwrap(),
        readout: randn(&[1, 4, 4, 4], 23, dtype),
    }
}

impl FfmCase {
    fn loss(&self) -> hkcd_model::Result<Tensor> {
        let out = self.ffm.forward(&self.h_c, self.h_f.as_tensor())?;
        Ok((out.h_t * &self.readout)?.sum_all()?)
    }

    fn vars(&self) -> Vec<(String, Var)> {
        let mut v = vec![("h_f".to_string(), self.h_f.clone())];
        v.extend(self.store.trainable());
        v
    }
}

fn report(label: &str, r: &GradCheckReport) {
    let w = r.worst().unwrap();
    println!(
        "{label}: {} probes, max rel error {:.3e} ({}[{}] analytic {:.6e} numeric {:.6e})",
        r.probes.len(),
        r.max_rel_error(),
        w.name,
        w.index,
        w.analytic,
        w.numeric
    );
}

#[test]
fn ffm_input_gradient_matches_central_differences() {
    let c = ffm_case(DType::F64);
    let vars = vec![("h_f".to_string(), c.h_f.clone())];
    let cfg = GradCheckConfig {
        probes: 64,
        step: 1e-5,
        ..Default::default()
    };
    let r = check_gradients(&vars, &|| c.loss(), &vars, &|| c.loss(), &cfg).unwrap();
    report("ffm h_f f64", &r);
    assert_eq!(r.probes.len(), 64);
    assert!(r.max_rel_error() < 1e-4);
}

#[test]
fn ffm_parameter_gradients_f64_and_f32() {
    let c64 = ffm_case(DType::F64);
    let v64 = c64.vars();
    let cfg = GradCheckConfig {
        probes: 60,
        step: 1e-5,
        seed: 1,
        // gradients here are O(0.1); the key bias gradient is exactly zero
        // by softmax shift invariance and only rounding noise remains
        floor: 1e-3,
    };
    let r = check_gradients(&v64, &|| c64.loss(), &v64, &|| c64.loss(), &cfg).unwrap();
    report("ffm f64", &r);
    assert!(r.probes.len() >= 50);
    assert!(r.max_rel_error() < 1e-5);

    let c32 = ffm_case(DType::F32);
    let v32 = c32.vars();
    let r = check_gradients(&v32, &|| c32.loss(), &v64, &|| c64.loss(), &cfg).unwrap();
    report("ffm f32", &r);
    assert!(r.max_rel_error() < 1e-3);
}

struct ModelCase {
    model: Hcdn,
    poor: Tensor,
    good: Tensor,
    mask: Tensor,
}

impl ModelCase {
    fn new(dtype: DType, reference: Option<&Hcdn>) -> Self {
        let model = Hcdn::new(toy_config(), dtype).unwrap();
        if let Some(r) = reference {
            model.copy_weights_from(r).unwrap();
        }
        Self {
            model,
            poor: randn(&[2, 3, 16, 16], 31, dtype),
            good: randn(&[2, 3, 16, 16], 32, dtype),
            mask: binary_mask(&[2, 1, 16, 16], 33, dtype),
        }
    }

    fn loss(&self) -> hkcd_model::Result<Tensor> {
        let logits = self.model.forward(&self.poor, &self.good)?;
        weighted_cross_entropy(&logits, &self.mask, &LossConfig::default())
    }
}

#[test]
fn full_model_gradients_f64_and_f32() {
    let start = std::time::Instant::now();
    let m32 = ModelCase::new(DType::F32, None);
    let m64 = ModelCase::new(DType::F64, Some(&m32.model));
    let v64 = m64.model.params().trainable();
    let v32 = m32.model.params().trainable();
    let cfg = GradCheckConfig {
        probes: 60,
        step: 1e-5,
        seed: 2,
        ..Default::default()
    };
    let r = check_gradients(&v64, &|| m64.loss(), &v64, &|| m64.loss(), &cfg).unwrap();
    report("model f64", &r);
    assert!(r.probes.len() >= 50);
    assert!(r.max_rel_error() < 1e-5, "{:?}", r.worst());

    let r = check_gradients(&v32, &|| m32.loss(), &v64, &|| m64.loss(), &cfg).unwrap();
    report("model f32", &r);
    assert!(r.max_rel_error() < 1e-3, "{:?}", r.worst());
    println!("elapsed {:?}", start.elapsed());
}
