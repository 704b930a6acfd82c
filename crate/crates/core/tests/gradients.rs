//! Analytic gradients of the whole objective against finite differences.

use hetsann::config::Variant;
use hetsann::verify::{all_labeled_masks, analytic_gradients, gradcheck, gradcheck_config, gradcheck_fixture, gradcheck_model};

#[test]
fn full_objective_all_extensions() {
    let g = gradcheck_fixture(0);
    let model = gradcheck_model(&g, &gradcheck_config(Variant::MRV), 0).unwrap();
    let report = gradcheck(&g, &model, 5e-4, false).unwrap();
    assert!(report.passed(), "worst: {:?}", report.worst());
}

#[test]
fn full_objective_without_cycle_weights() {
    let g = gradcheck_fixture(1);
    let mut config = gradcheck_config(Variant::MRV);
    config.beta1 = 0.0;
    config.beta2 = 0.0;
    let model = gradcheck_model(&g, &config, 1).unwrap();
    assert!(gradcheck(&g, &model, 5e-4, false).unwrap().passed());
}

#[test]
fn concat_scoring_objective() {
    let g = gradcheck_fixture(2);
    let model = gradcheck_model(&g, &gradcheck_config(Variant::M), 2).unwrap();
    assert!(gradcheck(&g, &model, 5e-4, false).unwrap().passed());
}

#[test]
fn multi_task_gradients_add_up() {
    let g = gradcheck_fixture(4);
    let both = gradcheck_model(&g, &gradcheck_config(Variant::M), 4).unwrap();
    let masks = all_labeled_masks(&g, &both);
    let joint = analytic_gradients(&g, &both, &masks, 0.0).unwrap();

    let mut only_main = both.clone();
    only_main.tasks.truncate(1);
    let main = analytic_gradients(&g, &only_main, &masks[..1], 0.0).unwrap();
    let mut only_aux = both.clone();
    only_aux.tasks.remove(0);
    let aux = analytic_gradients(&g, &only_aux, &masks[1..], 0.0).unwrap();

    let w = both.layers[0].heads[0].transform(1, 0).unwrap().index();
    assert!(joint[w].data().iter().any(|v| *v != 0.0));
    for ((j, a), b) in joint[w].data().iter().zip(main[w].data()).zip(aux[w].data()) {
        assert!((j - (a + b)).abs() < 1e-12);
    }
}
