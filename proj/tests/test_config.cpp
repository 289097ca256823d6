#include <doctest.h>

#include "pointmtl/config.hpp"

using namespace pointmtl;

TEST_CASE("config defaults mirror the full-size training setup") {
    RunConfig cfg = parse_run_config("{}");
    CHECK(cfg.train.lr == 0.003);
    CHECK(cfg.train.lr_decay == 0.8);
    CHECK(cfg.train.lr_period == 50);
    CHECK(cfg.train.batch_size == 40);
    CHECK(cfg.train.weights.alpha == 0.005);
    CHECK(cfg.train.weights.beta == 1.0);
    CHECK(cfg.train.weights.gamma == 500.0);
    CHECK(cfg.train.model.m == 2048);
    CHECK(cfg.train.model.k_ub == 500);
    CHECK(cfg.train.augment.noise_std == 0.01);
    CHECK(cfg.train.augment.z_rot_deg == 180.0);
    CHECK(cfg.train.augment.xy_rot_deg == 20.0);
}

TEST_CASE("desk preset scales the architecture down") {
    RunConfig cfg = parse_run_config(R"({"preset": "desk"})");
    CHECK(cfg.train.model.m == 256);
    CHECK(cfg.train.model.k_list == std::vector<int64_t>{8, 12, 16});
    CHECK(cfg.train.model.d_shape == 64);
    CHECK(cfg.train.model.d_point == 128);
    CHECK(cfg.train.model.k_ub == 32);
    CHECK(cfg.train.batch_size == 16);
    CHECK(cfg.train.epochs == 100);
    cfg.train.validate();
}

TEST_CASE("unknown keys are rejected at any depth") {
    CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), Error);
    CHECK_THROWS_AS(parse_run_config(R"({"model": {"bogus": 1}})"), Error);
    CHECK_THROWS_AS(parse_run_config(R"({"train": {"weights": {"delta": 1}}})"), Error);
    CHECK_THROWS_AS(parse_run_config("not json"), Error);
}

TEST_CASE("dump -> parse round trip reproduces the configuration") {
    RunConfig cfg = parse_run_config(R"({
        "preset": "desk",
        "seed": 17,
        "out_dir": "runs/x",
        "train": {"epochs": 7, "weights": {"gamma": 123.0}},
        "task_mask": {"clustering": false, "classification": true, "reconstruction": true}
    })");
    std::string dumped = dump_run_config(cfg);
    RunConfig again = parse_run_config(dumped);
    CHECK(again.train.seed == 17);
    CHECK(again.train.epochs == 7);
    CHECK(again.train.weights.gamma == 123.0);
    CHECK(again.out_dir == "runs/x");
    CHECK_FALSE(again.train.model.task_mask.clustering);
    CHECK(again.train.model.task_mask.reconstruction);
    CHECK(dump_run_config(again) == dumped);
    CHECK(config_hash(again.train) == config_hash(cfg.train));
}

TEST_CASE("task mask flag parsing") {
    TaskMask recon = parse_task_mask("reconstruction");
    CHECK_FALSE(recon.clustering);
    CHECK_FALSE(recon.classification);
    CHECK(recon.reconstruction);

    TaskMask pair = parse_task_mask("clustering,classification");
    CHECK(pair.clustering);
    CHECK(pair.classification);
    CHECK_FALSE(pair.reconstruction);

    TaskMask all = parse_task_mask("all");
    CHECK(all.any());
    CHECK(all.clustering);

    CHECK_THROWS_AS(parse_task_mask("everything"), Error);
    CHECK_THROWS_AS(parse_task_mask(""), Error);
}
