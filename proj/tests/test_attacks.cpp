#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "helpers.hpp"
#include "latnet/attacks.hpp"
#include "latnet/errors.hpp"

using namespace latnet;
using namespace latnet::testing;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

double linf_dist(const Tensor& a, const Tensor& b) {
    return (a.array() - b.array()).abs().maxCoeff();
}

// Binary linear classifier with logits (w x, -w x): the cross-entropy gradient
// in x has the sign of (label ? w : -w).
Network score_pair_net(double w) {
    Network net;
    net.input_shape = {1};
    net.num_classes = 2;
    DenseLayer d;
    d.weights = Tensor({2, 1});
    d.weights[0] = w;
    d.weights[1] = -w;
    d.bias = Tensor({2}, 0.0);
    net.layers.push_back(std::move(d));
    validate(net);
    return net;
}

Network linear2_net(const std::vector<double>& w, const std::vector<double>& b, int classes) {
    Network net;
    net.input_shape = {2};
    net.num_classes = classes;
    DenseLayer d;
    d.weights = Tensor({Index(classes), 2});
    for (Index i = 0; i < d.weights.size(); ++i) d.weights[i] = w[static_cast<std::size_t>(i)];
    d.bias = Tensor({Index(classes)});
    for (Index i = 0; i < d.bias.size(); ++i) d.bias[i] = b[static_cast<std::size_t>(i)];
    net.layers.push_back(std::move(d));
    validate(net);
    return net;
}

double example_loss(const Network& net, const Tensor& x, int label) {
    return loss_cross_entropy(forward(net, x).logits(), label);
}

}  // namespace

TEST_CASE("project: linf clips per coordinate, l2 rescales radially") {
    Tensor center({3});
    center[0] = 0.5;
    center[1] = 0.5;
    center[2] = 0.5;
    Tensor point({3});
    point[0] = 1.5;
    point[1] = -0.2;
    point[2] = 0.55;

    Tensor got = project(point, center, 0.3, Norm::linf);
    CHECK(got[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(got[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(got[2] == 0.55);  // already inside: untouched

    // l2: lands exactly on the sphere, direction preserved
    Tensor l2 = project(point, center, 0.3, Norm::l2);
    Eigen::Vector3d d(l2[0] - 0.5, l2[1] - 0.5, l2[2] - 0.5);
    Eigen::Vector3d d0(1.0, -0.7, 0.05);
    CHECK(d.norm() == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(d.normalized().dot(d0.normalized()) == doctest::Approx(1.0).epsilon(1e-12));

    // an inside point survives both norms bitwise
    Tensor inside({3});
    inside[0] = 0.45;
    inside[1] = 0.62;
    inside[2] = 0.5;
    CHECK(bitwise_equal(project(inside, center, 0.3, Norm::linf), inside));
    CHECK(bitwise_equal(project(inside, center, 0.3, Norm::l2), inside));
}

TEST_CASE("project: clamp composes after the ball and eps=0 returns the center") {
    Tensor center({1});
    center[0] = 0.9;
    Tensor point({1});
    point[0] = 1.5;
    Tensor got = project(point, center, 0.3, Norm::linf, true);
    CHECK(got[0] == 1.0);  // ball clip to 1.2, then [0,1]

    Tensor at_zero = project(point, center, 0.0, Norm::linf);
    CHECK(at_zero[0] == 0.9);

    Tensor bad_center({2});
    CHECK_THROWS_AS(project(point, bad_center, 0.3, Norm::linf), ShapeError);
    CHECK_THROWS_AS(project(point, center, -0.1, Norm::linf), ArgumentError);
}

TEST_CASE("project: random points land inside the ball") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor center = random_tensor(rng, {7}, 0.0, 1.0);
        Tensor point = random_tensor(rng, {7}, -2.0, 3.0);
        const double eps = rng.uniform(0.0, 0.8);
        Tensor li = project(point, center, eps, Norm::linf);
        CHECK(linf_dist(li, center) <= eps + 1e-12);
        Tensor l2 = project(point, center, eps, Norm::l2);
        CHECK((l2.array() - center.array()).matrix().norm() <= eps + 1e-12);
    }
}

TEST_CASE("fgsm on the score-pair net moves against the margin") {
    Network net = score_pair_net(1.0);
    Tensor x({1});
    x[0] = 0.5;

    // J = log(1 + exp(-2x)) for label 0: gradient negative, step is -eps
    Tensor adv0 = fgsm(net, x, 0, 0.1);
    CHECK(adv0[0] == doctest::Approx(0.4).epsilon(1e-12));

    // label 1 flips the sign
    Tensor adv1 = fgsm(net, x, 1, 0.1);
    CHECK(adv1[0] == doctest::Approx(0.6).epsilon(1e-12));

    // the step is clipped to [0,1]
    Tensor clipped = fgsm(net, x, 0, 0.9);
    CHECK(clipped[0] == 0.0);

    // and eps = 0 is the identity
    Tensor frozen = fgsm(net, x, 0, 0.0);
    CHECK(frozen[0] == 0.5);

    // fgsm increases the loss it targets
    CHECK(example_loss(net, adv0, 0) > example_loss(net, x, 0));
    CHECK(example_loss(net, adv1, 1) > example_loss(net, x, 1));
}

TEST_CASE("pgd with one full-size step reproduces fgsm bitwise") {
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
        Network net = random_network(rng, trial);
        Tensor x = random_tensor(rng, net.input_shape, 0.0, 1.0);
        const int label = static_cast<int>(rng.below(static_cast<std::uint64_t>(net.num_classes)));
        const double eps = 0.05 + 0.25 * rng.uniform(0.0, 1.0);

        Tensor want = fgsm(net, x, label, eps);
        for (double alpha : {eps, 2.0 * eps, 10.0}) {
            AttackConfig cfg;
            cfg.eps = eps;
            cfg.step_size = alpha;
            cfg.steps = 1;
            cfg.random_start = false;
            Rng attack_rng(0);
            Tensor got = pgd(net, x, label, cfg, attack_rng);
            CHECK(bitwise_equal(got, want));
        }
    }
}

TEST_CASE("pgd matches grid search on linear toys") {
    // For a linear classifier the loss is convex in x, so the exact optimum
    // over the box sits at a vertex; the 41x41 grid contains all four.
    struct Case {
        std::vector<double> w, b;
        int classes;
        int label;
    };
    const std::vector<Case> cases = {
        {{1.3, -0.4, -0.7, 0.9}, {0.1, -0.2}, 2, 0},
        {{-2.0, 0.5, 1.0, 1.5}, {0.0, 0.3}, 2, 1},
        {{0.8, 0.8, -0.8, 0.2}, {-0.5, 0.5}, 2, 0},
        {{1.0, 0.0, -1.0, 2.0, 0.5, -1.5}, {0.0, 0.1, -0.1}, 3, 2},
    };
    const double eps = 0.2;
    Tensor x0({2});
    x0[0] = 0.5;
    x0[1] = 0.5;

    for (const Case& c : cases) {
        Network net = linear2_net(c.w, c.b, c.classes);

        double best = -1.0;
        for (int i = 0; i <= 40; ++i) {
            for (int j = 0; j <= 40; ++j) {
                Tensor x = x0;
                x[0] += eps * (-1.0 + i / 20.0);
                x[1] += eps * (-1.0 + j / 20.0);
                best = std::max(best, example_loss(net, x, c.label));
            }
        }

        AttackConfig cfg;
        cfg.eps = eps;
        cfg.steps = 40;
        cfg.random_start = false;
        Rng rng(0);
        Tensor adv = pgd(net, x0, c.label, cfg, rng);
        const double reached = example_loss(net, adv, c.label);
        CHECK(reached >= best - 1e-6);
        CHECK(reached <= best + 1e-9);  // grid holds the vertices, so it is exact
        CHECK(linf_dist(adv, x0) <= eps + 1e-12);
    }
}

TEST_CASE("pgd iterates respect the budget at every surface") {
    Rng rng(59);
    const double budgets[] = {0.0, 0.03, 0.3, 1.5};
    int spot = 0;
    for (int trial = 0; trial < 36; ++trial) {
        Network net = random_network(rng, trial);
        const Index b = 3;
        Tensor xb = random_batch(rng, net, b);
        std::vector<int> labels = random_labels(rng, b, net.num_classes);

        AttackConfig cfg;
        cfg.eps = budgets[trial % 4];
        cfg.norm = (trial / 4) % 2 == 0 ? Norm::linf : Norm::l2;
        cfg.steps = 1 + static_cast<int>(rng.below(5));
        cfg.random_start = trial % 2 == 0;
        cfg.step_size = trial % 3 == 0 ? cfg.eps / 2.0 : 0.0;
        cfg.surface = static_cast<Index>(spot++ % 3) * (net.num_layers() - 1) / 2;

        Tensor center = xb;
        if (cfg.surface > 0) {
            Workspace ws;
            ForwardTrace tr;
            forward_span_into(net, 0, cfg.surface, xb, tr, ws);
            center = tr.at_boundary(cfg.surface);
        }
        Tensor adv = pgd_batch(net, xb, labels, cfg, rng);
        REQUIRE(adv.shape() == center.shape());

        const Index n = adv.size() / b;
        for (Index i = 0; i < b; ++i) {
            Eigen::Map<const Eigen::VectorXd> a(adv.data() + i * n, n);
            Eigen::Map<const Eigen::VectorXd> c(center.data() + i * n, n);
            if (cfg.norm == Norm::linf)
                CHECK((a - c).lpNorm<Eigen::Infinity>() <= cfg.eps + 1e-12);
            else
                CHECK((a - c).norm() <= cfg.eps + 1e-12);
        }
        if (cfg.surface == 0) {
            CHECK(adv.array().minCoeff() >= 0.0);
            CHECK(adv.array().maxCoeff() <= 1.0);
        }
        if (cfg.eps == 0.0) CHECK(bitwise_equal(adv, center));
    }
}

TEST_CASE("pgd without random start leaves the rng untouched") {
    Rng rng(61);
    Network net = random_network(rng, 2);
    Tensor xb = random_batch(rng, net, 2);
    std::vector<int> labels = random_labels(rng, 2, net.num_classes);

    AttackConfig cfg;
    cfg.eps = 0.2;
    cfg.steps = 3;
    cfg.random_start = false;

    Rng used(999);
    (void)pgd_batch(net, xb, labels, cfg, used);
    CHECK(used.state() == Rng(999).state());

    // with random start the stream advances and the result moves
    cfg.random_start = true;
    Rng r1(999), r2(999);
    Tensor a1 = pgd_batch(net, xb, labels, cfg, r1);
    Tensor a2 = pgd_batch(net, xb, labels, cfg, r2);
    CHECK(bitwise_equal(a1, a2));  // same stream, same answer
    CHECK(r1.state() == r2.state());
    CHECK(r1.state() != Rng(999).state());
    cfg.random_start = false;
    Rng r3(999);
    Tensor plain = pgd_batch(net, xb, labels, cfg, r3);
    CHECK_FALSE(bitwise_equal(a1, plain));
}

TEST_CASE("pgd raises the loss it ascends") {
    Rng rng(67);
    for (int trial = 0; trial < 5; ++trial) {
        Network net = random_network(rng, trial);
        const Index b = 16;
        Tensor xb = random_batch(rng, net, b);
        std::vector<int> labels = random_labels(rng, b, net.num_classes);

        AttackConfig cfg;
        cfg.eps = 0.1;
        cfg.steps = 10;
        cfg.random_start = false;
        Rng attack_rng(1);
        Tensor adv = pgd_batch(net, xb, labels, cfg, attack_rng);
        CHECK(batch_loss(net, adv, labels) > batch_loss(net, xb, labels));
    }
}

TEST_CASE("pgd surface and argument validation") {
    Rng rng(71);
    Network net = random_network(rng, 0);
    Tensor x = random_tensor(rng, net.input_shape, 0.0, 1.0);
    Tensor xb = random_batch(rng, net, 2);
    std::vector<int> labels = random_labels(rng, 2, net.num_classes);

    AttackConfig cfg;
    cfg.surface = 1;
    Rng r(0);
    CHECK_THROWS_AS(pgd(net, x, 0, cfg, r), ArgumentError);

    cfg.surface = net.num_layers();  // logits are not attackable
    CHECK_THROWS_AS(pgd_batch(net, xb, labels, cfg, r), ArgumentError);

    cfg.surface = 0;
    cfg.steps = 0;
    CHECK_THROWS_AS(pgd_batch(net, xb, labels, cfg, r), ArgumentError);

    cfg.steps = 1;
    cfg.eps = -0.1;
    CHECK_THROWS_AS(pgd_batch(net, xb, labels, cfg, r), ArgumentError);

    cfg.eps = 0.1;
    std::vector<int> short_labels = {0};
    CHECK_THROWS_AS(pgd_batch(net, xb, short_labels, cfg, r), ShapeError);

    Tensor bad = random_tensor(rng, {2, 3}, 0.0, 1.0);
    CHECK_THROWS_AS(pgd_batch(net, bad, labels, cfg, r), ShapeError);
}

TEST_CASE("latent attack is deterministic and stays inside the input ball") {
    Rng rng(73);
    for (int trial = 0; trial < 6; ++trial) {
        Network net = random_network(rng, trial);
        const Index b = 4;
        Tensor xb = random_batch(rng, net, b);
        std::vector<int> labels = random_labels(rng, b, net.num_classes);

        LatentAttackConfig cfg;
        cfg.layer = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(net.num_layers() - 1)));
        cfg.input_eps = 0.25;
        cfg.latent_eps = 0.4;
        cfg.inner_steps = 3;
        cfg.outer_steps = 2;

        Tensor a1 = latent_attack_batch(net, xb, labels, cfg);
        Tensor a2 = latent_attack_batch(net, xb, labels, cfg);
        CHECK(bitwise_equal(a1, a2));
        CHECK(linf_dist(a1, xb) <= cfg.input_eps + 1e-12);
        CHECK(a1.array().minCoeff() >= 0.0);
        CHECK(a1.array().maxCoeff() <= 1.0);
    }
}

TEST_CASE("latent attack with a zero latent budget returns the input") {
    // The matching target never leaves h_m(x), so the descent gradient is
    // identically zero and sign(0) = 0 keeps every iterate at x.
    Rng rng(79);
    Network net = random_network(rng, 0);
    Tensor xb = random_batch(rng, net, 3);
    std::vector<int> labels = random_labels(rng, 3, net.num_classes);

    LatentAttackConfig cfg;
    cfg.layer = 2;
    cfg.input_eps = 0.3;
    cfg.latent_eps = 0.0;
    Tensor adv = latent_attack_batch(net, xb, labels, cfg);
    CHECK(bitwise_equal(adv, xb));
}

TEST_CASE("latent attack argument validation") {
    Rng rng(83);
    Network net = random_network(rng, 1);
    Tensor xb = random_batch(rng, net, 2);
    std::vector<int> labels = random_labels(rng, 2, net.num_classes);

    LatentAttackConfig cfg;
    cfg.layer = 0;
    CHECK_THROWS_AS(latent_attack_batch(net, xb, labels, cfg), ArgumentError);
    cfg.layer = net.num_layers();
    CHECK_THROWS_AS(latent_attack_batch(net, xb, labels, cfg), ArgumentError);
    cfg.layer = 1;
    cfg.inner_steps = 0;
    CHECK_THROWS_AS(latent_attack_batch(net, xb, labels, cfg), ArgumentError);
    cfg.inner_steps = 1;
    cfg.input_eps = -1.0;
    CHECK_THROWS_AS(latent_attack_batch(net, xb, labels, cfg), ArgumentError);
}

TEST_CASE("accuracy helpers agree with clean accuracy at zero budget") {
    Rng rng(89);
    Network net;
    net.input_shape = {4};
    net.num_classes = 2;
    net.layers.push_back(make_dense(6, 4, rng));
    net.layers.push_back(ReluLayer{});
    net.layers.push_back(make_dense(2, 6, rng));
    validate(net);

    Dataset data = synthetic_two_gaussians(rng, 30, 4, 3.0);
    const double clean = accuracy(net, data);

    AttackConfig cfg;
    cfg.eps = 0.0;
    cfg.steps = 1;
    cfg.random_start = false;
    Rng attack_rng(3);
    CHECK(adversarial_accuracy(net, data, cfg, attack_rng) == clean);

    LatentAttackConfig lcfg;
    lcfg.layer = 1;
    lcfg.latent_eps = 0.0;
    lcfg.input_eps = 0.3;
    CHECK(latent_attack_accuracy(net, data, lcfg) == clean);
}
