macro_rules! example {
    ($module:ident, $test:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(geometry_frames, geometry_frames_runs, "geometry_frames.rs");
example!(prompts_and_replies, prompts_and_replies_runs, "prompts_and_replies.rs");
example!(oracle_agents, oracle_agents_runs, "oracle_agents.rs");
example!(ground_one_task, ground_one_task_runs, "ground_one_task.rs");
example!(evaluate_suite, evaluate_suite_runs, "evaluate_suite.rs");
example!(ablations, ablations_runs, "ablations.rs");
example!(sweep_top_k, sweep_top_k_runs, "sweep_top_k.rs");
example!(draw_overlay, draw_overlay_runs, "draw_overlay.rs");
example!(load_manifest, load_manifest_runs, "load_manifest.rs");
example!(config_file, config_file_runs, "config_file.rs");
example!(live_backend, live_backend_runs, "live_backend.rs");
