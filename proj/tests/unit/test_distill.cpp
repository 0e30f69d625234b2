// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <deque>

#include "helpers.hpp"
#include "vspp/commands.hpp"
#include "vspp/config.hpp"
#include "vspp/distill.hpp"
#include "vspp/metrics.hpp"
#include "vspp/pipeline.hpp"
#include "vspp/error.hpp"

using namespace vspp;
using namespace vspp::distill;

namespace {

Tensor unit_rows(std::int64_t rows, std::int64_t dim, std::uint64_t seed) {
  return models::l2_normalize(testutil::random_tensor({rows, dim}, seed));
}

Errc code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::Io;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("bank FIFO basics") {
    MemoryBank bank(4, 2);
    Tensor abcd({4, 2}), ef({2, 2});
    abcd.data = {1, 0, 0, 1, -1, 0, 0, -1};
    const double s = std::sqrt(0.5);
    ef.data = {s, s, -s, s};
    bank.enqueue(abcd);
    CHECK(bank.fill() == 4);
    bank.enqueue(ef);
    const Tensor aged = bank.anchors_by_age();
    CHECK(std::vector<double>(aged.data.begin(), aged.data.end()) ==
          std::vector<double>{-1, 0, 0, -1, s, s, -s, s});
    bank.enqueue(ef);
    bank.enqueue(abcd);
    CHECK(bank.anchors_by_age() == abcd);
  }

  TEST_CASE("bank matches a reference deque") {
    for (int capacity : {4, 64}) {
      MemoryBank bank(capacity, 3);
      std::deque<std::vector<double>> ref;
      std::mt19937_64 rng(capacity);
      for (int op = 0; op < 500; ++op) {
        const auto b = static_cast<std::int64_t>(1 + rng() % 9);
        const Tensor v = unit_rows(b, 3, rng());
        bank.enqueue(v);
        for (std::int64_t r = 0; r < b; ++r) {
          ref.emplace_back(v.data.begin() + r * 3, v.data.begin() + r * 3 + 3);
          if (static_cast<int>(ref.size()) > capacity) ref.pop_front();
        }
        const Tensor aged = bank.anchors_by_age();
        REQUIRE(aged.dim(0) == static_cast<std::int64_t>(ref.size()));
        for (std::size_t i = 0; i < ref.size(); ++i)
          CHECK(std::equal(ref[i].begin(), ref[i].end(), aged.data.begin() + static_cast<std::ptrdiff_t>(i) * 3));
      }
    }
  }

  TEST_CASE("bank input validation") {
    MemoryBank bank(4, 3);
    CHECK(code_of([&] { bank.enqueue(unit_rows(2, 4, 1)); }) == Errc::DimMismatch);
    Tensor off = unit_rows(1, 3, 2);
    off[0] *= 1.01;
    CHECK(code_of([&] { bank.enqueue(off); }) == Errc::NotNormalized);
    CHECK(code_of([&] { similarity_distribution(off.span(), MemoryBank(4, 3), 0.1); }) == Errc::EmptyBank);
  }

  TEST_CASE("equal similarities give a uniform distribution") {
    MemoryBank bank(2, 2);
    Tensor a({2, 2});
    a.data = {1, 0, 0, 1};
    bank.enqueue(a);
    const double s = std::sqrt(0.5);
    const std::vector<double> z{s, s};
    for (double g : {0.01, 0.02, 1.0, 100.0}) {
      const auto p = similarity_distribution(z, bank, g);
      CHECK(p[0] == doctest::Approx(0.5));
      CHECK(p[1] == doctest::Approx(0.5));
    }
  }

  TEST_CASE("sharp temperature against the high precision oracle") {
    MemoryBank bank(2, 2);
    Tensor a({2, 2});
    a.data = {1, 0, 0, 1};
    bank.enqueue(a);
    const std::vector<double> z{1, 0};
    const auto p = similarity_distribution(z, bank, 0.02);
    const std::vector<double> logits{1 / 0.02, 0 / 0.02};
    const auto ref = oracle::softmax_hp(logits);
    CHECK(std::abs(p[0] - 1.0) < 1e-15);
    CHECK(std::abs(p[0] - ref[0]) < 1e-15);
    CHECK(p[1] == doctest::Approx(ref[1]).epsilon(1e-12));
    CHECK(1 - p[0] == doctest::Approx(oracle::softmax_complement_hp(logits, 0)).epsilon(1e-3));
  }

  TEST_CASE("large temperature flattens the distribution") {
    // p_max / p_min = exp(spread / gamma) and p_min <= 1 / H bound the gap
    MemoryBank bank(8, 5);
    bank.enqueue(unit_rows(8, 5, 3));
    const Tensor z = unit_rows(1, 5, 4);
    const Tensor anchors = bank.anchors();
    std::vector<double> sims;
    for (int i = 0; i < 8; ++i) {
      double dot = 0;
      for (int d = 0; d < 5; ++d) dot += z[d] * anchors[i * 5 + d];
      sims.push_back(dot);
    }
    const auto [smin, smax] = std::minmax_element(sims.begin(), sims.end());
    const auto p = similarity_distribution(z.span(), bank, 100.0);
    const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
    CHECK(*hi - *lo <= (std::exp((*smax - *smin) / 100.0) - 1) / 8 + 1e-15);

    // anchors clustered within a cosine spread below 0.8 stay under 1e-3
    Tensor near({8, 5});
    for (int i = 0; i < 8; ++i) {
      near[i * 5] = 1.0;
      near[i * 5 + 1 + i % 4] = (i < 4 ? 0.3 : -0.3);
    }
    MemoryBank tight(8, 5);
    tight.enqueue(models::l2_normalize(near));
    const auto q = similarity_distribution(z.span(), tight, 100.0);
    const auto [qlo, qhi] = std::minmax_element(q.begin(), q.end());
    CHECK(*qhi - *qlo < 1e-3);
  }

  TEST_CASE("distributions agree with the oracle and sum to one") {
    MemoryBank bank(16, 6);
    bank.enqueue(unit_rows(11, 6, 5));
    const Tensor z = unit_rows(4, 6, 6);
    const Tensor P = similarity_distributions(z, bank, 0.07);
    CHECK(P.shape == Shape{4, 11});
    const Tensor anchors = bank.anchors();
    for (int r = 0; r < 4; ++r) {
      std::vector<double> logits;
      for (int i = 0; i < 11; ++i) {
        double dot = 0;
        for (int d = 0; d < 6; ++d) dot += z[r * 6 + d] * anchors[i * 6 + d];
        logits.push_back(dot / 0.07);
      }
      const auto ref = oracle::softmax_hp(logits);
      double sum = 0;
      for (int i = 0; i < 11; ++i) {
        CHECK(P[r * 11 + i] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-12));
        sum += P[r * 11 + i];
      }
      CHECK(std::abs(sum - 1) < 1e-6);
    }
  }

  TEST_CASE("kl divergence values") {
    const std::vector<double> p{0.75, 0.25}, q{0.5, 0.5};
    CHECK(kl_loss(p, p) == doctest::Approx(0.0));
    CHECK(std::abs(kl_loss(p, p)) < 1e-9);
    CHECK(std::abs(kl_loss(p, q) - 0.130812) < 1e-5);
    CHECK(kl_loss(p, q) == doctest::Approx(oracle::kl_hp(p, q)).epsilon(1e-12));
    CHECK(code_of([&] { kl_loss(p, std::vector<double>{1.0}); }) == Errc::LengthMismatch);
  }

  TEST_CASE("gibbs inequality on random pairs") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(1e-6, 1);
    for (int i = 0; i < 1000; ++i) {
      const std::size_t n = 2 + rng() % 9;
      std::vector<double> p(n), q(n);
      double sp = 0, sq = 0;
      for (std::size_t k = 0; k < n; ++k) sp += p[k] = u(rng), sq += q[k] = u(rng);
      for (std::size_t k = 0; k < n; ++k) p[k] /= sp, q[k] /= sq;
      CHECK(kl_loss(p, q) >= 0);
    }
  }

  TEST_CASE("batched kl sums over rows") {
    MemoryBank bank(6, 4);
    bank.enqueue(unit_rows(6, 4, 8));
    const Tensor zt = unit_rows(3, 4, 9), zs = unit_rows(3, 4, 10);
    const auto loss = distill_loss(zt, zs, bank, 0.05, 0.1);
    double total = 0;
    for (int r = 0; r < 3; ++r) {
      const auto pt = similarity_distribution(std::span<const double>(zt.ptr() + r * 4, 4), bank, 0.05);
      const auto ps = similarity_distribution(std::span<const double>(zs.ptr() + r * 4, 4), bank, 0.1);
      total += oracle::kl_hp(pt, ps);
    }
    CHECK(loss.loss == doctest::Approx(total).epsilon(1e-10));
    CHECK(kl_loss(loss.p_teacher, loss.p_student) == doctest::Approx(total).epsilon(1e-10));
  }

  TEST_CASE("identical views through identical networks give zero loss") {
    MemoryBank bank(8, 5);
    bank.enqueue(unit_rows(8, 5, 11));
    const Tensor z = unit_rows(4, 5, 12);
    CHECK(std::abs(distill_loss(z, z, bank, 0.02, 0.02).loss) < 1e-12);
  }

  TEST_CASE("kl gradient against finite differences on a probe") {
    MemoryBank bank(4, 8);
    bank.enqueue(unit_rows(4, 8, 13));
    const Tensor zt = unit_rows(2, 8, 14);
    nn::Linear fc(5, 8);
    Rng rng(15);
    fc.reset_parameters(rng);
    nn::L2Normalize norm;
    Tensor x = testutil::random_tensor({2, 5}, 16);
    auto params = nn::parameters_of(fc);
    auto loss_fn = [&] { return distill_loss(zt, norm.forward(fc.forward(x, nn::Mode::Train), nn::Mode::Train), bank, 0.1, 0.1).loss; };
    nn::zero_grad(params);
    const Tensor zs = norm.forward(fc.forward(x, nn::Mode::Train), nn::Mode::Train);
    fc.backward(norm.backward(distill_loss(zt, zs, bank, 0.1, 0.1).grad_student));
    std::vector<oracle::ProbeTensor> probes;
    for (const auto& p : params) probes.push_back({p.name, p.param->value.span(), p.param->grad.data});
    for (const auto& r : oracle::grad_check(loss_fn, probes, 1e-6)) CHECK(r.max_rel_error < 1e-3);
  }

  TEST_CASE("momentum update probes") {
    nn::Parameter t(Shape{3}), s(Shape{3});
    for (double m : {0.0, 0.9, 0.999, 1.0}) {
      t.value.data = {1.0, 2.0, -3.0};
      s.value.data = {0.0, 4.0, 5.0};
      momentum_update({{"w", &t}}, {{"w", &s}}, m);
      const double expect[3] = {m * 1.0, m * 2.0 + (1 - m) * 4.0, m * -3.0 + (1 - m) * 5.0};
      for (int i = 0; i < 3; ++i) CHECK(std::abs(t.value[i] - expect[i]) < 1e-12);
    }
    t.value.data = {1.0, 1.0, 1.0};
    s.value.data = {0.0, 0.0, 0.0};
    momentum_update({{"w", &t}}, {{"w", &s}}, 0.9);
    CHECK(t.value[0] == doctest::Approx(0.9));
    nn::Parameter wrong(Shape{2});
    CHECK(code_of([&] { momentum_update({{"w", &t}}, {{"w", &wrong}}, 0.5); }) == Errc::ShapeMismatch);
    CHECK(code_of([&] { momentum_update({{"w", &t}}, {{"w", &s}}, 1.5); }) == Errc::InvalidParams);
  }

  TEST_CASE("training step contracts") {
    DistillPair pair{models::init_from_scratch(testutil::probe_encoder(), {8, 16}, 3), 0.9, 0.1, 0.1};
    MemoryBank bank(16, 8);
    nn::Sgd sgd({0.9, 0.0});
    auto& student = *pair.nets.student;
    auto& teacher = *pair.nets.teacher;
    const auto sp = nn::parameters_of(student);
    const auto tp = nn::parameters_of(teacher);

    for (int step = 0; step < 6; ++step) {
      const Tensor v1 = testutil::random_tensor({4, 3, 4, 6, 6}, 100 + step, 0, 1);
      const Tensor v2 = testutil::random_tensor({4, 3, 4, 6, 6}, 200 + step, 0, 1);
      std::vector<Tensor> s_before, t_before;
      for (const auto& p : sp) s_before.push_back(p.param->value);
      for (const auto& p : tp) t_before.push_back(p.param->value);
      const int fill_before = bank.fill();
      const auto r = aux_train_step(pair, bank, v1, v2, sgd, 0.05);
      CHECK(std::isfinite(r.loss));
      CHECK(r.loss >= 0);
      CHECK(r.max_sum_error < 1e-6);
      CHECK(r.seeded_bank == (fill_before == 0));
      CHECK(bank.fill() == std::min(16, fill_before + 4));
      for (const auto& t : tp)
        for (double g : t.param->grad.data) CHECK(g == 0.0);
      // the teacher moves towards the student as it was before the SGD step
      std::size_t ti = 0;
      for (std::size_t i = 0; i < sp.size() && ti < tp.size(); ++i) {
        if (sp[i].name != tp[ti].name) continue;
        for (std::size_t k = 0; k < tp[ti].param->value.size(); ++k)
          CHECK(std::abs(tp[ti].param->value[k] - (0.9 * t_before[ti][k] + 0.1 * s_before[i][k])) < 1e-12);
        ++ti;
      }
      CHECK(ti == tp.size());
      bool changed = false;
      for (std::size_t i = 0; i < sp.size(); ++i) changed |= !(sp[i].param->value == s_before[i]);
      CHECK(changed);
    }
  }

  TEST_CASE("desk-scale stage-1 training is finite and its loss trends down") {
    config::RunConfig cfg;
    cfg.aux.momentum = 0.999;
    const auto dataset = commands::load_dataset(cfg);
    const auto refs = pipeline::make_refs(commands::split_videos(dataset, data::Split::Train));
    DistillPair pair{models::init_from_scratch(cfg.encoder(), cfg.heads(), cfg.seed), cfg.aux.momentum,
                     cfg.aux.teacher_temp, cfg.aux.student_temp};
    MemoryBank bank(cfg.aux.bank_size, cfg.model.projection_dim);
    nn::Sgd sgd(cfg.sgd());
    const auto settings = cfg.view_settings();
    std::vector<double> steps, losses;
    for (std::uint64_t epoch = 1; losses.size() < 100; ++epoch) {
      for (const auto& batch : pipeline::epoch_batches(refs, cfg.optim.batch_size, cfg.seed, epoch)) {
        if (losses.size() == 100) break;
        const auto r = aux_train_step(pair, bank, batch, settings, epoch, sgd, cfg.aux.lr);
        REQUIRE(std::isfinite(r.loss));
        CHECK(r.loss >= 0);
        CHECK(r.max_sum_error < 1e-6);
        steps.push_back(static_cast<double>(losses.size()));
        losses.push_back(r.loss);
      }
    }
    const std::vector<double> first_steps(steps.begin(), steps.begin() + 50);
    const std::vector<double> first_losses(losses.begin(), losses.begin() + 50);
    const double slope = metrics::regression_slope(first_steps, first_losses);
    MESSAGE("kl slope over 50 steps: " << slope);
    CHECK(slope < 0);
  }
}
