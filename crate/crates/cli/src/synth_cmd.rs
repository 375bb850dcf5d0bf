//! Synthetic-data subcommands: seeded raster scenes and labeled graphs.

use kiln_synth::{
    gen_anisotropic_graph, gen_feature_separable_graph, gen_raster_scene, write_scene, ClassRule,
};

use crate::config::load_run_config;
use crate::{CliError, SynthGraphArgs, SynthRasterArgs};

pub fn raster(args: SynthRasterArgs) -> Result<(), CliError> {
    let mut spec = load_run_config(args.config.as_deref())?.synth;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(w) = args.width {
        spec.scene.width = w;
    }
    if let Some(h) = args.height {
        spec.scene.height = h;
    }
    if let Some(f) = args.frames {
        spec.scene.frames = f;
    }
    if let Some(k) = args.kilns {
        spec.scene.kiln_count = k;
    }
    if let Some(r) = args.radius {
        spec.scene.kiln_radius_px = r;
    }
    if let Some(a) = args.activity {
        spec.scene.activity_probability = a;
    }
    if let Some(d) = args.distractors {
        spec.scene.distractor_count = d;
    }

    let scene = gen_raster_scene(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    write_scene(&scene, &args.out).map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "{} kilns, {} distractor roofs, {} frames over {} tiles -> {}",
        scene.truth.len(),
        spec.scene.distractor_count,
        spec.scene.frames,
        scene.tiles.len(),
        args.out.display()
    );
    Ok(())
}

pub fn graph(args: SynthGraphArgs) -> Result<(), CliError> {
    let mut spec = load_run_config(args.config.as_deref())?.synth;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(n) = args.nodes {
        spec.graph.node_count = n;
    }
    if let Some(k) = args.k {
        spec.graph.k = k;
    }
    if let Some(axis) = args.axis {
        spec.graph.anisotropy_axis_deg = axis;
    }
    if let Some(rule) = &args.rule {
        spec.graph.class_rule = rule
            .parse::<ClassRule>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }

    let graph = match spec.graph.class_rule {
        ClassRule::BearingMajority => gen_anisotropic_graph(&spec),
        ClassRule::FeatureSeparable => gen_feature_separable_graph(&spec),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let json = graph.to_json().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::write(&args.out, json)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", args.out.display())))?;
    println!(
        "{} nodes, {} edges, rule {} -> {}",
        graph.nodes.len(),
        graph.edges.len(),
        spec.graph.class_rule,
        args.out.display()
    );
    Ok(())
}
