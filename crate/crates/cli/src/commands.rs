//! The six subcommands. Each loads its upstream artifacts, delegates to the core crate
//! and writes its outputs under the work directory.

use std::io::Write;
use std::path::PathBuf;

use kdm_core::eval::{
    agreement, detect_outliers, energy_distance, knn_purity, line_svg, outlier_provenance, perturbation_sweep,
    scatter_svg, to_points, Bounds,
};
use kdm_core::kdm::{train_kdm, write_training_log_csv, KdmModel};
use kdm_core::ndmath::{Matrix, Rng};
use kdm_core::pairs::{load_checkpoint, load_pairs, save_checkpoint, save_pairs, write_pairs_csv, NoisePair, PairMeta, PairSet};
use kdm_core::teacher::{generate_pairs, sample_checkerboard, train_teacher, CheckerboardSpec, Teacher};
use kdm_core::theory::{edmd_sweep, verify_semantic_proximity, write_edmd_csv, Lifting};

use crate::artifacts::{
    artifact_path, kdm_checkpoint, pairs_file, require, teacher_checkpoint, write_bytes, write_effective_config,
    write_with, Stage,
};
use crate::config::{RunConfig, SampleModel};
use crate::error::{CliError, CliResult};

/// Result of one command: its primary artifact and a few `key=value` summary lines.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub primary: PathBuf,
    pub summary: Vec<String>,
}

pub fn load_teacher(cfg: &RunConfig) -> CliResult<Teacher> {
    let path = teacher_checkpoint(cfg);
    require(&path, "teacher checkpoint (run train-teacher)")?;
    Ok(Teacher::from_checkpoint(&load_checkpoint(&path)?)?)
}

pub fn load_student(cfg: &RunConfig) -> CliResult<KdmModel> {
    let path = kdm_checkpoint(cfg);
    require(&path, "student checkpoint (run train-kdm)")?;
    Ok(KdmModel::from_checkpoint(&load_checkpoint(&path)?)?)
}

pub fn load_pair_set(cfg: &RunConfig) -> CliResult<PairSet> {
    let path = pairs_file(cfg);
    require(&path, "pairs file (run gen-pairs)")?;
    Ok(load_pairs(&path)?)
}

pub fn cmd_train_teacher(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut rng = Rng::new(cfg.teacher.seed);
    let (teacher, losses) = train_teacher(&cfg.spec(), &cfg.teacher_config(), &mut rng)?;
    let primary = teacher_checkpoint(cfg);
    if let Some(dir) = primary.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_checkpoint(&teacher.to_checkpoint(), &primary)?;
    write_with(&artifact_path(cfg, Stage::Teacher, "-loss.csv"), |out| {
        writeln!(out, "iteration,loss")?;
        losses.iter().enumerate().try_for_each(|(i, l)| writeln!(out, "{i},{l}"))
    })?;
    write_effective_config(cfg, Stage::Teacher)?;
    let tail = &losses[losses.len().saturating_sub(100)..];
    let final_loss = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
    Ok(Outcome {
        primary,
        summary: vec![format!("final_loss={final_loss}")],
    })
}

pub fn cmd_gen_pairs(cfg: &RunConfig) -> CliResult<Outcome> {
    let teacher = load_teacher(cfg)?;
    let p = &cfg.pairs;
    let set = generate_pairs(&teacher, p.n, p.nfe, p.seed, p.conditional, cfg.policy())?;
    let primary = pairs_file(cfg);
    if let Some(dir) = primary.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_pairs(&set, &primary)?;
    write_with(&artifact_path(cfg, Stage::Pairs, ".csv"), |out| write_pairs_csv(&set, out))?;
    write_effective_config(cfg, Stage::Pairs)?;
    let mut summary = vec![format!("pairs={}", set.len())];
    if p.conditional {
        summary.push(format!("outside_fraction={}", set.outside_fraction()));
    }
    Ok(Outcome { primary, summary })
}

pub fn cmd_train_kdm(cfg: &RunConfig) -> CliResult<Outcome> {
    let set = load_pair_set(cfg)?;
    let mut rng = Rng::new(cfg.kdm.seed);
    let trained = train_kdm(&set, &cfg.kdm_config(), &mut rng)?;
    let primary = kdm_checkpoint(cfg);
    if let Some(dir) = primary.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    save_checkpoint(&trained.model.to_checkpoint(), &primary)?;
    write_with(&artifact_path(cfg, Stage::Kdm, "-log.csv"), |out| {
        write_training_log_csv(&trained.log, out)
    })?;
    write_effective_config(cfg, Stage::Kdm)?;
    let last = trained.log.last().map_or(f64::NAN, |r| r.losses.pred);
    Ok(Outcome {
        primary,
        summary: vec![format!("final_pred_loss={last}")],
    })
}

/// Labels for a batch: the requested one, or cells in rotation when none is given.
fn batch_labels(n: usize, classes: Option<usize>, requested: Option<usize>) -> Option<Vec<usize>> {
    classes.map(|k| (0..n).map(|i| requested.unwrap_or(i % k)).collect())
}

fn prior_batch(n: usize, std: f64, rng: &mut Rng) -> Matrix {
    let mut x = Matrix::zeros(n, 2);
    rng.fill_normal(x.data_mut(), std);
    x
}

pub fn cmd_sample(cfg: &RunConfig) -> CliResult<Outcome> {
    let s = &cfg.sample;
    let teacher = load_teacher(cfg)?;
    let student = match s.model {
        SampleModel::Student => Some(load_student(cfg)?),
        SampleModel::Teacher => None,
    };
    let classes = match &student {
        Some(m) => m.num_classes(),
        None => teacher.num_classes,
    };
    if s.label.is_some() && classes.is_none() {
        return Err(CliError::key("sample.label", format!("the {} model is unconditional", s.model)));
    }
    let mut rng = Rng::new(s.seed);
    let x_t = prior_batch(s.count, teacher.prior_std(), &mut rng);
    let labels = batch_labels(s.count, classes, s.label);
    let out = if s.count == 0 {
        Matrix::zeros(0, 2)
    } else {
        match &student {
            Some(m) => m.sample_batch(&x_t, labels.as_deref())?,
            None => teacher.end_map(&x_t, cfg.pairs.nfe, labels.as_deref())?,
        }
    };
    let primary = artifact_path(cfg, Stage::Sample, ".csv");
    write_with(&primary, |w| {
        writeln!(w, "xT_x,xT_y,x,y,label")?;
        for i in 0..s.count {
            let label = labels.as_ref().map_or(String::new(), |l| l[i].to_string());
            writeln!(w, "{},{},{},{},{label}", x_t.get(i, 0), x_t.get(i, 1), out.get(i, 0), out.get(i, 1))?;
        }
        Ok(())
    })?;
    write_effective_config(cfg, Stage::Sample)?;
    Ok(Outcome {
        primary,
        summary: vec![format!("samples={}", s.count)],
    })
}

fn inside_fraction(spec: &CheckerboardSpec, points: &[[f64; 2]]) -> f64 {
    points.iter().filter(|p| spec.cell_of(**p).is_some()).count() as f64 / points.len().max(1) as f64
}

fn hit_rate(spec: &CheckerboardSpec, points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let hits = points.iter().zip(labels).filter(|(p, &l)| spec.cell_of(**p) == Some(l)).count();
    hits as f64 / points.len().max(1) as f64
}

/// Every evaluation report for the configured teacher, harvest and student.
pub fn cmd_eval(cfg: &RunConfig) -> CliResult<Outcome> {
    let e = &cfg.eval;
    let teacher = load_teacher(cfg)?;
    let student = load_student(cfg)?;
    let set = load_pair_set(cfg)?;
    let spec = teacher.data_spec;
    let policy = cfg.policy();
    let prior_std = teacher.prior_std();
    let nfe = cfg.pairs.nfe;
    let dir = cfg.workdir.join("eval").join(crate::artifacts::artifact_id(cfg, Stage::Eval));
    let mut rng = Rng::new(e.seed);
    let mut summary = Vec::new();

    // Distributional quality against fresh data and a Gaussian baseline.
    let (truth, _) = sample_checkerboard(&spec, e.samples, &mut rng);
    let gauss = to_points(&prior_batch(e.samples, 1.0, &mut rng));
    let x_t = prior_batch(e.samples, prior_std, &mut rng);
    let t_labels = batch_labels(e.samples, teacher.num_classes, None);
    let s_labels = batch_labels(e.samples, student.num_classes(), None);
    let teacher_out = to_points(&teacher.end_map(&x_t, nfe, t_labels.as_deref())?);
    let student_out = to_points(&student.sample_batch(&x_t, s_labels.as_deref())?);
    let baseline = energy_distance(&gauss, &truth, e.seed, policy)?;
    let ed_teacher = energy_distance(&teacher_out, &truth, e.seed, policy)?;
    let ed_student = energy_distance(&student_out, &truth, e.seed, policy)?;
    summary.push(format!("energy_gaussian_baseline={baseline}"));
    summary.push(format!("energy_teacher={ed_teacher}"));
    summary.push(format!("energy_student={ed_student}"));
    summary.push(format!("teacher_inside_fraction={}", inside_fraction(&spec, &teacher_out)));
    summary.push(format!("student_inside_fraction={}", inside_fraction(&spec, &student_out)));
    if let Some(l) = &t_labels {
        summary.push(format!("teacher_requested_cell_rate={}", hit_rate(&spec, &teacher_out, l)));
    }
    if let Some(l) = &s_labels {
        summary.push(format!("student_requested_cell_rate={}", hit_rate(&spec, &student_out, l)));
    }

    // Teacher–student agreement on fresh noises.
    let k_t = teacher.num_classes;
    let k_s = student.num_classes();
    let agree = agreement(
        |x: &Matrix| teacher.end_map(x, nfe, batch_labels(x.rows(), k_t, None).as_deref()),
        |x: &Matrix| student.sample_batch(x, batch_labels(x.rows(), k_s, None).as_deref()),
        e.samples,
        2,
        prior_std,
        e.seed.wrapping_add(1),
    )?;
    summary.push(format!("agreement_paired_mse={}", agree.paired_mse));
    summary.push(format!("agreement_permuted_mse={}", agree.permuted_mse));
    write_with(&dir.join("agreement.csv"), |w| agree.write_csv(w))?;

    // Noise-space structure of the harvest.
    let structure = knn_purity(&set, e.k, policy)?;
    summary.push(format!("knn_purity={}", structure.purity));
    summary.push(format!("knn_chance={}", structure.chance));
    write_with(&dir.join("structure.csv"), |w| structure.write_csv(w))?;

    // Outliers among the student's samples and where their noises came from.
    let generated = PairSet {
        pairs: (0..e.samples)
            .map(|i| {
                let x_0 = student_out[i];
                let label = spec.cell_of(x_0);
                NoisePair {
                    x_t: [x_t.get(i, 0), x_t.get(i, 1)],
                    x_0,
                    label,
                    outside: label.is_none(),
                }
            })
            .collect(),
        meta: PairMeta {
            conditional: true,
            ..set.meta
        },
    };
    let outliers = detect_outliers(&student_out, e.eps, e.min_pts)?;
    let provenance = outlier_provenance(&generated, &outliers, prior_std)?;
    summary.push(format!("outlier_rate={}", outliers.outlier_rate()));
    summary.push(format!("outlier_tail_cause={}", provenance.tail_cause()));
    summary.push(format!("outlier_boundary_cause={}", provenance.boundary_cause()));
    write_with(&dir.join("outliers.csv"), |w| outliers.write_csv(w))?;
    write_with(&dir.join("provenance.csv"), |w| provenance.write_csv(w))?;

    // Perturbation sweeps of both samplers from shared base noises.
    let base = prior_batch(e.sweep_points.min(e.samples), prior_std, &mut rng);
    let sweep_seed = rng.next_u64();
    let student_sweep = perturbation_sweep(
        |x: &Matrix| student.sample_batch(x, batch_labels(x.rows(), k_s, None).as_deref()),
        &base,
        &e.sigmas,
        prior_std,
        &mut Rng::new(sweep_seed),
    )?;
    let teacher_sweep = perturbation_sweep(
        |x: &Matrix| teacher.end_map(x, nfe, batch_labels(x.rows(), k_t, None).as_deref()),
        &base,
        &e.sigmas,
        prior_std,
        &mut Rng::new(sweep_seed),
    )?;
    write_with(&dir.join("sweep_student.csv"), |w| student_sweep.write_csv(w))?;
    write_with(&dir.join("sweep_teacher.csv"), |w| teacher_sweep.write_csv(w))?;
    let curve = |s: &kdm_core::eval::SweepResult| s.sigmas.iter().copied().zip(s.mean_displacement.iter().copied()).collect();
    let sweep_plot = line_svg(
        &[("student", curve(&student_sweep)), ("teacher", curve(&teacher_sweep))],
        "mean output displacement vs noise perturbation",
    );
    write_bytes(&dir.join("sweep.svg"), sweep_plot.as_bytes())?;

    // Figures: data, samples and the noise-space partition.
    let half = spec.extent * 1.25;
    let cells = |pts: &[[f64; 2]]| pts.iter().map(|p| spec.cell_of(*p)).collect::<Vec<_>>();
    let shown = e.samples.min(5000);
    for (name, pts) in [("data", &truth), ("teacher", &teacher_out), ("student", &student_out)] {
        let pts = &pts[..shown];
        let svg = scatter_svg(pts, &cells(pts), Bounds::square(half), &format!("{name} samples"));
        write_bytes(&dir.join(format!("{name}.svg")), svg.as_bytes())?;
    }
    let noise: Vec<[f64; 2]> = set.pairs.iter().take(shown).map(|p| p.x_t).collect();
    let noise_cells: Vec<_> = set.pairs.iter().take(shown).map(|p| spec.cell_of(p.x_0)).collect();
    let svg = scatter_svg(&noise, &noise_cells, Bounds::fit(&noise), "noise coloured by image cell");
    write_bytes(&dir.join("noise_structure.svg"), svg.as_bytes())?;

    let primary = dir.join("summary.csv");
    write_with(&primary, |w| {
        writeln!(w, "metric,value")?;
        summary.iter().try_for_each(|line| writeln!(w, "{}", line.replacen('=', ",", 1)))
    })?;
    write_bytes(&dir.join("eval.conf"), cfg.to_text().as_bytes())?;
    Ok(Outcome { primary, summary })
}

/// EDMD sweep and semantic-proximity check on the teacher's end map, expressed in
/// coordinates scaled by the prior standard deviation.
pub fn cmd_verify_theory(cfg: &RunConfig) -> CliResult<Outcome> {
    let th = &cfg.theory;
    let teacher = load_teacher(cfg)?;
    let scale = teacher.prior_std();
    let nfe = cfg.pairs.nfe;
    let k = teacher.num_classes;
    let phi = |u: &Matrix| -> kdm_core::Result<Matrix> {
        let mut x = u.clone();
        x.scale(scale);
        let mut y = teacher.end_map(&x, nfe, batch_labels(x.rows(), k, None).as_deref())?;
        y.scale(1.0 / scale);
        Ok(y)
    };
    let mut rng = Rng::new(th.seed);
    let edmd = edmd_sweep(phi, 2, &th.degrees, &cfg.edmd_config(1.0), &mut rng, cfg.policy())?;
    let primary = artifact_path(cfg, Stage::Theory, "-edmd.csv");
    write_with(&primary, |w| write_edmd_csv(&edmd, w))?;

    let prox_cfg = kdm_core::theory::ProximityConfig {
        lifting: Lifting::Identity,
        ..cfg.proximity_config(1.0)
    };
    let report = verify_semantic_proximity(phi, 2, &prox_cfg, &mut rng)?;
    write_with(&artifact_path(cfg, Stage::Theory, "-proximity.csv"), |w| report.write_csv(w))?;
    write_effective_config(cfg, Stage::Theory)?;

    let mut summary: Vec<String> = edmd
        .iter()
        .map(|r| format!("edmd_state_residual_deg{}={}", r.degree, r.state_residual))
        .collect();
    summary.extend(edmd.iter().flat_map(|r| r.warnings.iter().map(|w| format!("warning=degree {}: {w}", r.degree))));
    summary.push(format!("proximity_violation_rate={}", report.violation_rate));
    summary.push(format!("proximity_lipschitz={}", report.lipschitz));
    Ok(Outcome { primary, summary })
}
