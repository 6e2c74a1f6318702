#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "facekit/dataset.hpp"
#include "facekit/loss.hpp"
#include "facekit/model.hpp"
#include "facekit/optim.hpp"

namespace facekit {

struct TrainConfig {
    int epochs = 100;
    int pairs_per_epoch = 0;  // 0 = one pair per training image
    int batch_size = 16;
    double margin = 2.0;
    float lr = 0.005f;
    float momentum = 0.9f;
    std::uint32_t seed = 1;
    double split_fraction = 0.9;

    void validate() const {
        if (epochs < 1) throw TrainingError("config: epochs must be >= 1");
        if (batch_size < 1) throw TrainingError("config: batch_size must be >= 1");
        if (!(margin > 0.0)) throw TrainingError("config: margin must be > 0");
        if (!(split_fraction > 0.0 && split_fraction < 1.0))
            throw TrainingError("config: split_fraction must lie in (0,1)");
        if (pairs_per_epoch < 0) throw TrainingError("config: pairs_per_epoch must be >= 0");
    }
};

struct PairClassStats {
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

struct EvalStats {
    PairClassStats genuine, impostor;
    double tau = 0.0;
    double accuracy = 0.0;  // on the balanced pair set, predict same iff d < tau
    double best_tau = 0.0;
    double best_accuracy = 0.0;
    std::size_t balanced_genuine_count = 0;
    std::size_t balanced_impostor_count = 0;
};

struct TrainReport {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
    double wall_seconds = 0.0;
    EvalStats eval;
    std::size_t train_images = 0;
    std::size_t test_images = 0;
};

namespace detail {

inline PairClassStats stats_of(const std::vector<double>& d) {
    PairClassStats s;
    s.count = d.size();
    if (d.empty()) return s;
    s.min = s.max = d[0];
    double sum = 0.0;
    for (double v : d) {
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = sum / static_cast<double>(d.size());
    return s;
}

// Accuracy on a balanced set: all genuine distances plus an equal-count
// seeded sample of impostor distances (all of them if there are too few).
inline EvalStats score_distances(std::vector<double> genuine, std::vector<double> impostor,
                                 double tau, std::uint32_t seed) {
    EvalStats st;
    st.genuine = stats_of(genuine);
    st.impostor = stats_of(impostor);
    st.tau = tau;

    std::vector<double> imp_bal;
    if (impostor.size() > genuine.size() && !genuine.empty()) {
        std::vector<std::size_t> idx(impostor.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        Rng rng(seed);
        for (std::size_t i = 0; i < genuine.size(); ++i) {
            const std::size_t j = i + rng.next_index(idx.size() - i);
            std::swap(idx[i], idx[j]);
            imp_bal.push_back(impostor[idx[i]]);
        }
    } else {
        imp_bal = impostor;
    }
    st.balanced_genuine_count = genuine.size();
    st.balanced_impostor_count = imp_bal.size();
    const std::size_t total = genuine.size() + imp_bal.size();
    if (total == 0) return st;

    auto accuracy_at = [&](double t) {
        std::size_t correct = 0;
        for (double d : genuine)
            if (d < t) ++correct;
        for (double d : imp_bal)
            if (d >= t) ++correct;
        return static_cast<double>(correct) / static_cast<double>(total);
    };
    st.accuracy = accuracy_at(tau);

    // sweep thresholds at every distinct distance plus the extremes
    std::vector<double> cand;
    cand.reserve(total + 2);
    cand.push_back(0.0);
    for (double d : genuine) cand.push_back(std::nextafter(d, std::numeric_limits<double>::max()));
    for (double d : imp_bal) cand.push_back(d);
    st.best_tau = 0.0;
    st.best_accuracy = 0.0;
    for (double t : cand) {
        const double a = accuracy_at(t);
        if (a > st.best_accuracy) {
            st.best_accuracy = a;
            st.best_tau = t;
        }
    }
    return st;
}

struct Labelled {
    std::string subject;
    Embedding embedding;
};

inline std::vector<Labelled> labelled_embeddings(const SiameseParams& p, const FaceDataset& ds) {
    std::vector<FaceImage> imgs;
    std::vector<std::string> ids;
    for (const auto& [id, list] : ds.subjects)
        for (const auto& im : list) {
            imgs.push_back(im);
            ids.push_back(id);
        }
    const auto es = embed_all(p, imgs);
    std::vector<Labelled> out(es.size());
    for (std::size_t i = 0; i < es.size(); ++i) out[i] = {ids[i], es[i]};
    return out;
}

}  // namespace detail

// Genuine/impostor distance statistics and verification accuracy over all
// pairs inside `ds`. Needs at least one subject with two images.
inline EvalStats evaluate(const SiameseParams& params, const FaceDataset& ds, double tau,
                          std::uint32_t seed = 0) {
    if (ds.image_count() == 0) throw DatasetError("evaluate: empty dataset");
    const auto items = detail::labelled_embeddings(params, ds);
    std::vector<double> genuine, impostor;
    for (std::size_t i = 0; i < items.size(); ++i)
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            const double d = euclidean_distance(items[i].embedding, items[j].embedding);
            (items[i].subject == items[j].subject ? genuine : impostor).push_back(d);
        }
    return detail::score_distances(std::move(genuine), std::move(impostor), tau, seed);
}

// Verification of held-out probes against an enrolled gallery: every
// (probe, gallery) pair is genuine when the subject matches. This is the
// evaluation that fits a split whose test side keeps one image per subject.
inline EvalStats evaluate_against(const SiameseParams& params, const FaceDataset& gallery,
                                  const FaceDataset& probe, double tau, std::uint32_t seed = 0) {
    if (gallery.image_count() == 0 || probe.image_count() == 0)
        throw DatasetError("evaluate_against: empty dataset");
    const auto g = detail::labelled_embeddings(params, gallery);
    const auto q = detail::labelled_embeddings(params, probe);
    std::vector<double> genuine, impostor;
    for (const auto& probe_item : q)
        for (const auto& gallery_item : g) {
            const double d = euclidean_distance(probe_item.embedding, gallery_item.embedding);
            (probe_item.subject == gallery_item.subject ? genuine : impostor).push_back(d);
        }
    return detail::score_distances(std::move(genuine), std::move(impostor), tau, seed);
}

// ---------------------------------------------------------------------------
// Training loop. The pair set is sampled once up front (seeded) and the same
// batches are replayed every epoch, which keeps runs bitwise reproducible and
// makes a zero learning rate a strict no-op. Both images of every pair run in
// one batch, so batch-norm statistics span the whole batch.
// ---------------------------------------------------------------------------

inline std::pair<SiameseParams, TrainReport> train(const FaceDataset& ds, const TrainConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto [train_ds, test_ds] = split(ds, cfg.split_fraction, cfg.seed);

    const std::size_t n_pairs = cfg.pairs_per_epoch > 0
                                    ? static_cast<std::size_t>(cfg.pairs_per_epoch)
                                    : train_ds.image_count();
    const auto pairs = sample_pairs(train_ds, n_pairs, cfg.seed + 1);

    SiameseParams params = new_siamese(cfg.seed);
    SgdOptimizer opt(cfg.lr, cfg.momentum);
    auto trainable = params.trainable_params();

    TrainReport report;
    report.train_images = train_ds.image_count();
    report.test_images = test_ds.image_count();

    SiameseParams best = params;
    double best_loss = std::numeric_limits<double>::infinity();

    ForwardCache cache;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < pairs.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const int nb = static_cast<int>(end - start);

            std::vector<FaceImage> batch;
            batch.reserve(static_cast<std::size_t>(2 * nb));
            for (std::size_t i = start; i < end; ++i) batch.push_back(*pairs[i].a);
            for (std::size_t i = start; i < end; ++i) batch.push_back(*pairs[i].b);

            const Tensor out = forward_train(params, stack_faces(batch), cache);

            Tensor d_out({2 * nb, kEmbeddingDim});
            double batch_loss = 0.0;
            const float inv = 1.0f / static_cast<float>(nb);
            for (int i = 0; i < nb; ++i) {
                const Embedding ea = embedding_from_row(out, i);
                const Embedding eb = embedding_from_row(out, nb + i);
                const auto r =
                    contrastive_loss(ea, eb, pairs[start + static_cast<std::size_t>(i)].dissimilar,
                                     cfg.margin);
                batch_loss += r.loss;
                for (int k = 0; k < kEmbeddingDim; ++k) {
                    d_out.data[static_cast<std::size_t>(i) * kEmbeddingDim + k] = r.grad_a[k] * inv;
                    d_out.data[static_cast<std::size_t>(nb + i) * kEmbeddingDim + k] =
                        r.grad_b[k] * inv;
                }
            }
            if (!std::isfinite(batch_loss))
                throw TrainingError("non-finite loss " + std::to_string(batch_loss) + " at epoch " +
                                    std::to_string(epoch) + ", batch " +
                                    std::to_string(start / static_cast<std::size_t>(cfg.batch_size)));
            loss_sum += batch_loss;

            params.zero_grads();
            backward_train(params, cache, d_out);
            opt.step(trainable);
        }
        const double epoch_mean = loss_sum / static_cast<double>(pairs.size());
        report.epoch_loss.push_back(epoch_mean);
        if (epoch_mean < best_loss) {
            best_loss = epoch_mean;
            best = params;
        }
    }
    report.final_loss = report.epoch_loss.back();
    report.eval = evaluate_against(best, train_ds, test_ds, 1.0, cfg.seed);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(best), std::move(report)};
}

// Epoch losses as "epoch,mean_loss" lines.
inline void write_report_csv(const TrainReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << "epoch,mean_loss\n";
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i)
        out << (i + 1) << "," << report.epoch_loss[i] << "\n";
    if (!out) throw ParseError(path + ": short write");
}

}  // namespace facekit
