import pytest

from coed.config import ConfigError, load_config, paper_scale, parse_config, task_defaults


class TestParse:
    def test_overlay_and_types(self):
        cfg = parse_config("[experiment]\nseed = 3\n[train]\nlr = 0.01\nfreeze_theta = yes\n")
        assert cfg.experiment.seed == 3 and cfg.train.lr == 0.01 and cfg.train.freeze_theta is True
        assert cfg.model.layers == 4

    def test_task_selects_defaults(self):
        cfg = parse_config("[experiment]\ntask = grn\n")
        assert cfg.model.layerwise_theta and cfg.model.layers == 5

    @pytest.mark.parametrize("text", [
        "[experiment]\nsed = 1\n",               # typo in key
        "[expt]\nseed = 1\n",                    # unknown section
        "[train]\nlr = fast\n",                  # bad value
        "[train]\nlr = -1\n",                    # out of range
        "[model]\nalpha = 1.5\n",
        "[model]\nactivation = tanh\n",
        "[experiment]\ntask = images\n",
        "[experiment]\ntask = custom\n",         # dataset path missing
        "[grn]\nedge_prob = 0\n",
        "not an ini",
    ])
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_ini_round_trip(self):
        cfg = parse_config("[train]\nlr = 0.0003\n[lattice]\nfield = solenoid\n")
        assert parse_config(cfg.to_ini()).to_dict() == cfg.to_dict()

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.ini"))
        assert load_config(None).to_dict() == task_defaults("lattice").to_dict()


class TestScale:
    def test_desk_defaults(self):
        cfg = task_defaults("lattice")
        assert (cfg.lattice.rows, cfg.lattice.cols, cfg.lattice.n_realizations) == (15, 15, 200)
        g = task_defaults("grn").grn
        assert g.n_genes + g.n_doubles == 300

    def test_paper_scale(self):
        cfg = paper_scale(task_defaults("grn"))
        assert (cfg.grn.n_genes, cfg.grn.edge_prob, cfg.grn.n_doubles) == (200, 0.03, 1000)
        assert paper_scale(task_defaults("lattice")).lattice.n_realizations == 500

    def test_lattice_model_matches_generator_nonlinearity(self):
        cfg = task_defaults("lattice")
        assert cfg.model.activation == "normalize"
        assert (cfg.train.lr, cfg.train.lr_theta, cfg.train.batch_size, cfg.train.patience) == (3e-3, 1e-2, 16, 20)
