//! Subcommand implementations.

use serde::Serialize;

use pctta::aggregate::{
    classify_with_tta, segment_with_tta, AggMode, FeatureMode, StageTimings, TtaConfig,
};
use pctta::augment::{
    derive_seed, jitter, sample_mesh_vertices, upsample, AugmentMethod, AugmentPlan, JitterParams,
    UpsampleParams,
};
use pctta::eval::{run_evaluation, ClassifierChoice, EvalOptions, MethodSpec, TtaSpec};
use pctta::geometry::{normalize_unit_sphere, NormalizationTransform};
use pctta::io::{
    read_manifest, read_mesh, read_point_cloud, write_labels, write_point_cloud, CloudFormat, Task,
};
use pctta::predict::{argmax, load_predictor, Classifier, MlpPredictor};
use pctta::synth::{generate_dataset, ShapeClass, SynthConfig};
use pctta::TriangleMesh;

use crate::{
    usage, AggArg, AugmentArgs, ClassifyArgs, CliResult, EvalArgs, FeatArg, GenModelArgs,
    MethodArg, MethodParams, SegmentArgs, SynthArgs, TtaArg,
};

impl MethodParams {
    fn upsample_params(&self, rng_seed: u64) -> UpsampleParams {
        UpsampleParams {
            scale_r: self.scale_r,
            voxel_edge: self.voxel_edge,
            seed_band: self.seed_band,
            k_triangle: self.k_triangle,
            k_plane: self.k_plane,
            k_bias: self.k_bias,
            outlier_factor: self.outlier_factor,
            include_original: !self.exclude_original,
            rng_seed,
        }
    }

    /// Loads the mesh flag and maps it into the cloud's normalized frame.
    fn normalized_mesh(
        &self,
        transform: &NormalizationTransform,
        flag: &str,
    ) -> Result<TriangleMesh, crate::CliError> {
        let path = self
            .mesh
            .as_ref()
            .ok_or_else(|| usage(format!("{flag} mesh requires --mesh <file>")))?;
        let mut mesh = read_mesh(path)?;
        mesh.map_vertices(|v| transform.apply(v));
        Ok(mesh)
    }
}

fn tta_method(
    tta: TtaArg,
    params: &MethodParams,
    transform: &NormalizationTransform,
) -> Result<Option<AugmentMethod>, crate::CliError> {
    Ok(Some(match tta {
        TtaArg::None => return Ok(None),
        TtaArg::Copy => AugmentMethod::IdentityCopy,
        TtaArg::Jitter => AugmentMethod::Jitter {
            sigma: params.sigma,
        },
        TtaArg::Upsample => AugmentMethod::Upsample(params.upsample_params(0)),
        TtaArg::Mesh => AugmentMethod::MeshSurface {
            mesh: params.normalized_mesh(transform, "--tta")?,
        },
    }))
}

#[derive(Serialize)]
struct Provenance<'a> {
    input: String,
    method: &'a str,
    samples: usize,
    master_seed: u64,
    per_cloud_seeds: Vec<u64>,
    target: &'a str,
    transform: NormalizationTransform,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    upsample: Option<UpsampleParams>,
    outputs: Vec<String>,
}

pub fn augment(args: AugmentArgs) -> CliResult {
    let cloud = read_point_cloud(&args.input)?;
    let (normalized, transform) = normalize_unit_sphere(&cloud)?;
    let n = normalized.len();
    let target_count = |scaled: f64| -> usize {
        if args.target == "same" {
            n
        } else {
            (scaled * n as f64).floor() as usize
        }
    };

    let mesh = match args.method {
        MethodArg::Mesh => Some(args.params.normalized_mesh(&transform, "--method")?),
        _ => None,
    };

    std::fs::create_dir_all(&args.out).map_err(pctta::Error::from)?;
    let seeds: Vec<u64> = (0..args.samples as u64)
        .map(|k| derive_seed(args.seed, k))
        .collect();
    let mut outputs = Vec::with_capacity(args.samples);
    for (k, &seed_k) in seeds.iter().enumerate() {
        let augmented = match args.method {
            MethodArg::Copy => normalized.clone(),
            MethodArg::Jitter => jitter(
                &normalized,
                &JitterParams {
                    sigma: args.params.sigma,
                    rng_seed: seed_k,
                },
            )?,
            MethodArg::Upsample => {
                let params = args.params.upsample_params(seed_k);
                upsample(&normalized, &params, Some(target_count(params.scale_r)))?
            }
            MethodArg::Mesh => {
                let mesh = mesh.as_ref().expect("loaded above");
                sample_mesh_vertices(mesh, target_count(args.params.scale_r), seed_k)?
            }
        };
        let restored = transform.invert_cloud(&augmented);
        let name = format!("aug_{k:03}.xyz");
        write_point_cloud(&restored, args.out.join(&name), CloudFormat::XyzText)?;
        outputs.push(name);
    }

    let provenance = Provenance {
        input: args.input.display().to_string(),
        method: match args.method {
            MethodArg::Jitter => "jitter",
            MethodArg::Upsample => "upsample",
            MethodArg::Mesh => "mesh",
            MethodArg::Copy => "copy",
        },
        samples: args.samples,
        master_seed: args.seed,
        per_cloud_seeds: seeds,
        target: &args.target,
        transform,
        sigma: matches!(args.method, MethodArg::Jitter).then_some(args.params.sigma),
        upsample: matches!(args.method, MethodArg::Upsample)
            .then(|| args.params.upsample_params(0)),
        outputs,
    };
    let json = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
    std::fs::write(args.out.join("provenance.json"), json + "\n").map_err(pctta::Error::from)?;
    println!("wrote {} cloud(s) to {}", args.samples, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ClassifyOutput {
    label: usize,
    logits: Vec<f64>,
    per_cloud_logits: Vec<Vec<f64>>,
    timings: StageTimings,
}

pub fn classify(args: ClassifyArgs) -> CliResult {
    let model = load_predictor(&args.model)?;
    let cloud = read_point_cloud(&args.input)?;
    let (normalized, transform) = normalize_unit_sphere(&cloud)?;
    let mut timings = StageTimings::default();

    let output = match tta_method(args.tta, &args.params, &transform)? {
        None => {
            let t0 = std::time::Instant::now();
            let logits = Classifier::classify_logits(&model, &normalized)?;
            timings.inference_secs = t0.elapsed().as_secs_f64();
            ClassifyOutput {
                label: argmax(&logits),
                per_cloud_logits: vec![logits.clone()],
                logits,
                timings,
            }
        }
        Some(method) => {
            let config = TtaConfig::new(AugmentPlan {
                method,
                samples_m: args.samples,
                master_seed: args.seed,
            });
            let result = classify_with_tta(&model, &normalized, &config, &mut timings)?;
            ClassifyOutput {
                label: result.label,
                logits: result.final_logits,
                per_cloud_logits: result.per_cloud_logits,
                timings,
            }
        }
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("output serializes")
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentOutput {
    points: usize,
    labels_path: String,
    class_counts: Vec<usize>,
    timings: StageTimings,
}

pub fn segment(args: SegmentArgs) -> CliResult {
    let model = load_predictor(&args.model)?;
    let cloud = read_point_cloud(&args.input)?;
    let (normalized, transform) = normalize_unit_sphere(&cloud)?;

    let method =
        tta_method(args.tta, &args.params, &transform)?.unwrap_or(AugmentMethod::IdentityCopy);
    let samples = if args.tta == TtaArg::None {
        0
    } else {
        args.samples
    };
    let mut config = TtaConfig::new(AugmentPlan {
        method,
        samples_m: samples,
        master_seed: args.seed,
    });
    config.feature_mode = match args.feat {
        FeatArg::Xyz => FeatureMode::XyzOnly,
        FeatArg::XyzLogit => FeatureMode::XyzPlusLogit,
    };
    config.agg_mode = match args.agg {
        AggArg::Max => AggMode::Max,
        AggArg::Avg => AggMode::Avg,
    };
    config.neighbor_k = args.k as usize;
    config.logit_weight = args.logit_weight;
    config.softmax_before_avg = args.softmax_avg;

    let mut timings = StageTimings::default();
    let result = segment_with_tta(&model, &normalized, &config, &mut timings)?;
    write_labels(&result.labels, &args.out)?;

    let mut class_counts = vec![0usize; model.class_count()];
    for &l in &result.labels {
        class_counts[l] += 1;
    }
    let output = SegmentOutput {
        points: result.labels.len(),
        labels_path: args.out.display().to_string(),
        class_counts,
        timings,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&output).expect("output serializes")
    );
    Ok(())
}

pub fn eval(args: EvalArgs) -> CliResult {
    let manifest = read_manifest(&args.manifest)?;

    let classifier = match (&args.model, args.centroid_train) {
        (Some(_), Some(_)) => {
            return Err(usage("--model and --centroid-train are mutually exclusive"))
        }
        (None, None) => return Err(usage("one of --model or --centroid-train is required")),
        (Some(path), None) => ClassifierChoice::Mlp(load_predictor(path)?),
        (None, Some(per_class)) => {
            if per_class == 0 {
                return Err(usage("--centroid-train must be >= 1"));
            }
            ClassifierChoice::CentroidTrain {
                per_class,
                bins: args.bins,
            }
        }
    };

    // Segmentation-only flags are rejected on classification manifests.
    if manifest.task == Task::Classification {
        let seg_flags = [
            args.feat.is_some(),
            args.agg.is_some(),
            args.k.is_some(),
            args.logit_weight.is_some(),
            args.softmax_avg,
        ];
        if seg_flags.iter().any(|&set| set) {
            return Err(usage(
                "--feat/--agg/--k/--logit-weight/--softmax-avg apply to part_segmentation manifests only",
            ));
        }
    }
    if manifest.task == Task::PartSegmentation && args.centroid_train.is_some() {
        return Err(usage(
            "part segmentation needs --model (centroid classifier has no per-point head)",
        ));
    }

    let method = match args.tta {
        TtaArg::None => MethodSpec::Copy,
        TtaArg::Copy => MethodSpec::Copy,
        TtaArg::Jitter => MethodSpec::Jitter {
            sigma: args.params.sigma,
        },
        TtaArg::Upsample => MethodSpec::Upsample(args.params.upsample_params(0)),
        TtaArg::Mesh => {
            if !manifest.entries.iter().all(|e| e.mesh.is_some()) {
                return Err(usage(
                    "--tta mesh needs a mesh path for every manifest entry",
                ));
            }
            MethodSpec::Mesh
        }
    };
    let samples = if args.tta == TtaArg::None {
        0
    } else {
        args.samples
    };
    let mut tta = TtaSpec::new(method, samples, args.seed);
    tta.feature_mode = match args.feat {
        Some(FeatArg::XyzLogit) => FeatureMode::XyzPlusLogit,
        _ => FeatureMode::XyzOnly,
    };
    tta.agg_mode = match args.agg {
        Some(AggArg::Avg) => AggMode::Avg,
        _ => AggMode::Max,
    };
    tta.neighbor_k = args.k.map_or(1, |k| k as usize);
    tta.logit_weight = args.logit_weight.unwrap_or(1.0);
    tta.softmax_before_avg = args.softmax_avg;

    let densities = match &args.density_sweep {
        None => vec![None],
        Some(list) if list.is_empty() => {
            return Err(usage("--density-sweep needs at least one density"))
        }
        Some(list) => {
            if list.contains(&0) {
                return Err(usage("densities must be >= 1"));
            }
            list.iter().map(|&d| Some(d)).collect()
        }
    };

    let opts = EvalOptions {
        tta,
        densities,
        classifier,
    };
    let report = run_evaluation(&manifest, &opts)?;
    let json = pctta::eval::report_to_json(&report);
    match &args.out {
        Some(path) => std::fs::write(path, json).map_err(pctta::Error::from)?,
        None => print!("{json}"),
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> CliResult {
    let classes: Vec<ShapeClass> = args
        .classes
        .iter()
        .map(|s| s.parse::<ShapeClass>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(e.to_string()))?;
    let task = match args.task.as_str() {
        "classification" => Task::Classification,
        _ => Task::PartSegmentation,
    };
    let cfg = SynthConfig {
        classes,
        per_class: args.per_class,
        points: args.points,
        noise: args.noise,
        seed: args.seed,
        task,
    };
    let manifest = generate_dataset(&cfg, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

pub fn gen_model(args: GenModelArgs) -> CliResult {
    if args.classes == 0 {
        return Err(usage("--classes must be >= 1"));
    }
    let model = MlpPredictor::reference(args.classes, args.seed);
    model.save(&args.out)?;
    println!(
        "wrote reference model ({} classes, seed {}) to {}",
        args.classes,
        args.seed,
        args.out.display()
    );
    Ok(())
}
