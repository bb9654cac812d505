use doacert::config::{Config, Workflow};
use doacert::CliError;

fn bundled(name: &str) -> String {
    let path = format!("{}/../../configs/{}", env!("CARGO_MANIFEST_DIR"), name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {}", path, e))
}

fn config_error(text: &str) -> String {
    match Config::parse(text) {
        Err(CliError::Config(msg)) => msg,
        Err(other) => panic!("expected a config error, got {other}"),
        Ok(_) => panic!("config unexpectedly parsed"),
    }
}

const PENDULUM_HEAD: &str = r#"
[variables]
states = ["x1", "x2"]

[theta]
theta = [0.2, 1.0]

[domain]
x1 = [-2.4, 2.4]
x2 = [-6.0, 6.0]
"#;

fn pendulum_with(x2: &str) -> String {
    format!("{PENDULUM_HEAD}\n[dynamics]\nx1 = \"x2\"\nx2 = \"{x2}\"\n")
}

#[test]
fn bundled_configs_parse() {
    for name in ["example2.toml", "example4.toml", "example5.toml", "example6.toml"] {
        let cfg = Config::parse(&bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        for w in [Workflow::Approx, Workflow::Fixed, Workflow::Search] {
            cfg.resolve(w, None).unwrap();
        }
    }
}

#[test]
fn pendulum_structure() {
    let cfg = Config::parse(&bundled("example6.toml")).unwrap();
    assert_eq!(cfg.states, ["x1", "x2"]);
    assert_eq!(cfg.theta_names, ["theta"]);
    assert_eq!(cfg.system.functions().len(), 1);
    assert_eq!(cfg.system.ntheta(), 1);
    // damped pendulum: f(x, θ) at a known point
    let f = cfg.system.eval(&[0.5, 1.0], &[0.6]);
    assert!((f[0] - 1.0).abs() < 1e-15);
    assert!((f[1] - (-0.6 - 10.0 * 0.5f64.sin())).abs() < 1e-12);
}

#[test]
fn equal_functions_share_one_term() {
    let cfg = Config::parse(&pendulum_with("-theta*x2 - 4*sin(x1) - 6*sin(x1)")).unwrap();
    assert_eq!(cfg.system.functions().len(), 1);
    assert_eq!(cfg.system.equations()[1].terms.len(), 1);
}

#[test]
fn unknown_function_is_reported_with_position() {
    let msg = config_error(&pendulum_with("-theta*x2 - 10*tan(x1)"));
    assert!(msg.contains("unknown catalog function 'tan'"), "{msg}");
    assert!(msg.contains("byte"), "{msg}");
}

#[test]
fn constant_offset_breaks_the_equilibrium() {
    let msg = config_error(&pendulum_with("-theta*x2 - 10*sin(x1) + 0.1"));
    assert!(msg.contains("does not vanish at the origin"), "{msg}");
}

#[test]
fn malformed_polynomial_is_rejected() {
    let msg = config_error(&pendulum_with("-theta*x2 - 10*sin(x1"));
    assert!(msg.contains("x2"), "{msg}");
}

#[test]
fn arguments_must_be_scaled_states() {
    let msg = config_error(&pendulum_with("-theta*x2 - 10*sin(x1*x2)"));
    assert!(msg.contains("state times a constant"), "{msg}");
}

#[test]
fn option_validation() {
    let bad_tol = format!("{}\n[options]\ntol = 1.5\n", pendulum_with("-theta*x2 - 10*sin(x1)"));
    assert!(config_error(&bad_tol).contains("tol"));
    let bad_degree = format!("{}\n[options]\ndegree = 0\n", pendulum_with("-theta*x2 - 10*sin(x1)"));
    assert!(config_error(&bad_degree).contains("positive"));
    let unknown = format!(
        "{}\n[options.fixed]\nbogus = 1\n",
        pendulum_with("-theta*x2 - 10*sin(x1)")
    );
    let m = config_error(&unknown);
    assert!(m.contains("bogus"), "{m}");
    let missing = "[variables]\nstates = [\"x1\"]\n[dynamics]\n[domain]\nx1 = [-1.0, 1.0]\n";
    assert!(config_error(missing).contains("no equation for x1"));
}

#[test]
fn workflow_overrides_apply() {
    let cfg = Config::parse(&bundled("example5.toml")).unwrap();
    let fixed = cfg.resolve(Workflow::Fixed, None).unwrap();
    let search = cfg.resolve(Workflow::Search, Some(4)).unwrap();
    assert_eq!(fixed.degree, [7]);
    assert_eq!(search.degree, [8]);
    assert_eq!(fixed.system.domain().upper(), [0.9, 1.0]);
    assert_eq!(search.system.domain().upper(), [1.6, 3.0]);
    assert!(fixed.v.is_some());
    assert!(search.free_box_multipliers && !fixed.free_box_multipliers);
    assert_eq!(search.deg_v, 4);
}

#[test]
fn per_degree_tables_override_search_options() {
    let text = format!(
        "{}\n[options.search]\nbudget = 5\n[options.search.deg4]\nbudget = 9\n",
        pendulum_with("-theta*x2 - 10*sin(x1)")
    );
    let cfg = Config::parse(&text).unwrap();
    assert_eq!(cfg.resolve(Workflow::Search, Some(2)).unwrap().budget, 5);
    assert_eq!(cfg.resolve(Workflow::Search, Some(4)).unwrap().budget, 9);
}
