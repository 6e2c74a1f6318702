// facekit command line: dataset synthesis, training, evaluation, the
// recognition server and the camera-side clients.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "facekit/facekit.hpp"

namespace fk = facekit;

namespace {

volatile std::sig_atomic_t g_shutdown = 0;

void handle_signal(int) { g_shutdown = 1; }

void print_eval(const fk::EvalStats& e) {
    std::printf("genuine : count=%zu mean=%.4f min=%.4f max=%.4f\n", e.genuine.count,
                e.genuine.mean, e.genuine.min, e.genuine.max);
    std::printf("impostor: count=%zu mean=%.4f min=%.4f max=%.4f\n", e.impostor.count,
                e.impostor.mean, e.impostor.min, e.impostor.max);
    std::printf("accuracy at tau=%.3f: %.4f (balanced %zu genuine + %zu impostor)\n", e.tau,
                e.accuracy, e.balanced_genuine_count, e.balanced_impostor_count);
    std::printf("best threshold: tau=%.4f accuracy=%.4f\n", e.best_tau, e.best_accuracy);
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double idx = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

int run_synth(const std::string& out_dir, const fk::SyntheticConfig& cfg) {
    const std::size_t n = fk::write_synthetic_corpus(out_dir, cfg);
    std::printf("wrote %zu images (%d subjects x %d) under %s\n", n, cfg.subjects,
                cfg.images_per_subject, out_dir.c_str());
    return 0;
}

int run_train(const std::string& data_dir, const std::string& ckpt_path,
              const std::string& report_path, fk::TrainConfig cfg, int subjects, double tau) {
    fk::FaceDataset ds = fk::load_orl(data_dir);
    if (subjects > 0) ds = fk::take_subjects(ds, static_cast<std::size_t>(subjects));
    std::printf("dataset: %zu subjects, %zu images (source %dx%d)\n", ds.subject_count(),
                ds.image_count(), ds.source_width, ds.source_height);
    auto [params, report] = fk::train(ds, cfg);
    std::printf("trained %d epochs in %.1f s, final loss %.6f\n", cfg.epochs,
                report.wall_seconds, report.final_loss);
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i)
        if ((i + 1) % 10 == 0 || i == 0 || i + 1 == report.epoch_loss.size())
            std::printf("  epoch %3zu  loss %.6f\n", i + 1, report.epoch_loss[i]);
    if (!ckpt_path.empty()) {
        fk::save_checkpoint(params, ckpt_path);
        std::printf("checkpoint: %s\n", ckpt_path.c_str());
    }
    if (!report_path.empty()) {
        fk::write_report_csv(report, report_path);
        std::printf("report: %s\n", report_path.c_str());
    }
    std::printf("held-out verification (gallery = train split, tau=%.2f):\n", tau);
    print_eval(report.eval);
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& data_dir, double tau,
             double split_fraction, std::uint32_t seed, int subjects) {
    const fk::SiameseParams params = fk::load_checkpoint(ckpt_path);
    fk::FaceDataset ds = fk::load_orl(data_dir);
    if (subjects > 0) ds = fk::take_subjects(ds, static_cast<std::size_t>(subjects));
    auto [gallery, probe] = fk::split(ds, split_fraction, seed);
    const auto stats = fk::evaluate_against(params, gallery, probe, tau, seed);
    std::printf("probes: %zu held-out images vs %zu gallery images\n", probe.image_count(),
                gallery.image_count());
    print_eval(stats);
    return 0;
}

int run_serve(const std::string& listen, const std::string& ckpt_path, const std::string& db_path,
              fk::ServerConfig cfg) {
    const auto [host, port] = fk::net::parse_address(listen);
    cfg.host = host;
    cfg.port = port;
    auto params = std::make_shared<fk::SiameseParams>(fk::load_checkpoint(ckpt_path));
    auto db = std::make_shared<fk::FaceDb>();
    if (!db_path.empty() && std::filesystem::exists(db_path)) {
        *db = fk::FaceDb::load(db_path);
        std::printf("store: %zu rows from %s\n", db->count(), db_path.c_str());
    } else if (!db_path.empty()) {
        db->set_path(db_path);
    }
    fk::Server server(cfg, std::move(params), db);
    server.start();
    std::printf("listening on %s:%d (k=%zu, workers=%d)\n", cfg.host.c_str(), server.port(),
                cfg.k, cfg.embed_workers);
    std::fflush(stdout);
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_shutdown) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::printf("shutting down\n");
    server.stop();
    if (!db_path.empty()) {
        db->persist(db_path);
        std::printf("store: %zu rows persisted to %s\n", db->count(), db_path.c_str());
    }
    return 0;
}

int run_register(const std::string& server, const std::string& image, std::int64_t user_id) {
    const auto [host, port] = fk::net::parse_address(server);
    const auto ack = fk::register_user(image, user_id, host, port);
    std::printf("registered user %lld vector=[%.4f %.4f %.4f %.4f %.4f]\n",
                static_cast<long long>(ack.user_id), ack.vector[0], ack.vector[1], ack.vector[2],
                ack.vector[3], ack.vector[4]);
    return 0;
}

int run_recognize(const std::string& server, const std::string& frames_dir, fk::ClientConfig cfg,
                  double tau) {
    const auto [host, port] = fk::net::parse_address(server);
    cfg.server_host = host;
    cfg.server_port = port;
    const auto frames = fk::load_frames_dir(frames_dir);
    std::printf("replaying %zu frames from %s\n", frames.size(), frames_dir.c_str());
    const auto report = fk::run_capture_loop(frames, cfg);
    std::printf("%zu request(s) sent, %zu result(s), %zu error(s)\n", report.requests_sent,
                report.results.size(), report.errors.size());
    bool matched = false;
    for (const auto& r : report.results) {
        std::printf("%s%s%s:", r.request_id.c_str(), r.face_uid ? " " : "",
                    r.face_uid ? r.face_uid->c_str() : "");
        if (r.matches.empty())
            std::printf(" no matches%s", r.empty_store ? " (store empty)" : "");
        for (const auto& m : r.matches)
            std::printf(" %lld:%.4f", static_cast<long long>(m.user_id), m.distance);
        std::printf("\n");
        if (!r.matches.empty() && r.matches[0].distance < tau) matched = true;
    }
    for (const auto& e : report.errors) std::printf("error: %s\n", e.message.c_str());
    if (report.requests_sent == 0) std::printf("no motion detected, nothing sent\n");
    std::printf(matched ? "match under tau=%.2f\n" : "no match under tau=%.2f\n", tau);
    return matched ? 0 : 1;
}

int run_bench(const std::string& ckpt_path, int count, int store_rows, std::size_t k,
              std::uint32_t seed) {
    const fk::SiameseParams params = fk::load_checkpoint(ckpt_path);
    fk::Rng rng(seed);

    std::printf("== embedding latency (%d images) ==\n", count);
    std::vector<double> embed_ms;
    for (int i = 0; i < count + 3; ++i) {
        std::vector<float> px(static_cast<std::size_t>(fk::kFacePixels));
        for (auto& p : px) p = rng.next_float();
        const fk::FaceImage img = fk::make_face_image(std::move(px));
        const auto t0 = std::chrono::steady_clock::now();
        (void)fk::forward_once(params, img);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (i >= 3) embed_ms.push_back(ms);  // drop warmup
    }
    std::printf("p50=%.2f ms  p90=%.2f ms  p99=%.2f ms  (n=%zu)\n", percentile(embed_ms, 0.50),
                percentile(embed_ms, 0.90), percentile(embed_ms, 0.99), embed_ms.size());

    std::printf("== top-%zu query latency over %d rows ==\n", k, store_rows);
    fk::FaceDb db;
    for (int i = 0; i < store_rows; ++i) {
        fk::IdentityRecord rec;
        rec.user_id = i % 997;
        for (int j = 0; j < fk::kEmbeddingDim; ++j) rec.embedding[j] = rng.next_uniform(-3, 3);
        db.insert(rec);
    }
    std::vector<double> query_ms;
    for (int i = 0; i < count; ++i) {
        fk::Embedding q;
        for (int j = 0; j < fk::kEmbeddingDim; ++j) q[j] = rng.next_uniform(-3, 3);
        const auto t0 = std::chrono::steady_clock::now();
        (void)db.top_k(q, k);
        query_ms.push_back(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count());
    }
    std::printf("p50=%.3f ms  p90=%.3f ms  p99=%.3f ms  (n=%zu)\n", percentile(query_ms, 0.50),
                percentile(query_ms, 0.90), percentile(query_ms, 0.99), query_ms.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"facekit: face verification model, vector store, server and clients"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic face corpus (ORL layout)");
    std::string synth_out;
    fk::SyntheticConfig synth_cfg;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--subjects", synth_cfg.subjects, "number of subjects")
        ->capture_default_str();
    synth->add_option("--images", synth_cfg.images_per_subject, "images per subject")
        ->capture_default_str();
    synth->add_option("--seed", synth_cfg.seed, "generator seed")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "train the embedding model on a face corpus");
    std::string train_data, train_ckpt = "model.ckpt", train_report = "report.csv";
    fk::TrainConfig train_cfg;
    int train_subjects = 0;
    double train_tau = 1.0;
    train->add_option("--data", train_data, "corpus directory (per-subject PGM folders)")
        ->required();
    train->add_option("--out", train_ckpt, "checkpoint output path")->capture_default_str();
    train->add_option("--report", train_report, "epoch,mean_loss CSV output path")
        ->capture_default_str();
    train->add_option("--epochs", train_cfg.epochs, "training epochs")->capture_default_str();
    train->add_option("--pairs", train_cfg.pairs_per_epoch,
                      "pairs per epoch (0 = one per training image)")
        ->capture_default_str();
    train->add_option("--batch", train_cfg.batch_size, "pairs per optimizer step")
        ->capture_default_str();
    train->add_option("--margin", train_cfg.margin, "contrastive margin")->capture_default_str();
    train->add_option("--lr", train_cfg.lr, "learning rate")->capture_default_str();
    train->add_option("--momentum", train_cfg.momentum, "SGD momentum")->capture_default_str();
    train->add_option("--seed", train_cfg.seed, "run seed")->capture_default_str();
    train->add_option("--split", train_cfg.split_fraction, "train fraction per subject")
        ->capture_default_str();
    train->add_option("--subjects", train_subjects, "limit to first N subjects (0 = all)")
        ->capture_default_str();
    train->add_option("--tau", train_tau, "verification threshold for the held-out summary")
        ->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a face corpus");
    std::string eval_ckpt, eval_data;
    double eval_tau = 1.0, eval_split = 0.9;
    std::uint32_t eval_seed = 1;
    int eval_subjects = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
    eval->add_option("--data", eval_data, "corpus directory")->required();
    eval->add_option("--tau", eval_tau, "verification threshold")->capture_default_str();
    eval->add_option("--split", eval_split, "train fraction (must match the training run)")
        ->capture_default_str();
    eval->add_option("--seed", eval_seed, "split seed (must match the training run)")
        ->capture_default_str();
    eval->add_option("--subjects", eval_subjects, "limit to first N subjects (0 = all)")
        ->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "run the recognition server");
    std::string serve_listen = "127.0.0.1:7654", serve_ckpt, serve_db = "facedb.csv";
    fk::ServerConfig serve_cfg;
    serve->add_option("--listen", serve_listen, "listen address host:port")
        ->capture_default_str();
    serve->add_option("--ckpt", serve_ckpt, "checkpoint path")->required();
    serve->add_option("--db", serve_db, "identity table CSV (loaded if present, saved on exit)")
        ->capture_default_str();
    serve->add_option("--k", serve_cfg.k, "candidates per result")->capture_default_str();
    serve->add_option("--workers", serve_cfg.embed_workers, "embedding worker threads")
        ->capture_default_str();
    serve->add_option("--det-threshold", serve_cfg.detector_threshold,
                      "face gate: minimum pixel stddev")
        ->capture_default_str();
    serve->add_option("--synthetic-latency-ms", serve_cfg.synthetic_embed_latency_ms,
                      "test hook: replace embedding with a fixed delay")
        ->capture_default_str();
    serve->add_option("--batch-window-ms", serve_cfg.batch_window_ms,
                      "accumulate requests for batched embedding (0 = off)")
        ->capture_default_str();
    serve->add_option("--log", serve_cfg.activity_log_path, "activity log (JSON lines)")
        ->capture_default_str();

    // register
    auto* reg = app.add_subcommand("register", "enroll one face image under a user id");
    std::string reg_server = "127.0.0.1:7654", reg_image;
    std::int64_t reg_user = -1;
    reg->add_option("--server", reg_server, "server address host:port")->capture_default_str();
    reg->add_option("--image", reg_image, "PGM image path")->required();
    reg->add_option("--user-id", reg_user, "user id to enroll under")->required();

    // recognize
    auto* rec = app.add_subcommand("recognize", "replay frames through the motion gate");
    std::string rec_server = "127.0.0.1:7654", rec_frames;
    fk::ClientConfig rec_cfg;
    double rec_tau = 1.0;
    rec->add_option("--server", rec_server, "server address host:port")->capture_default_str();
    rec->add_option("--frames", rec_frames, "directory of PGM frames (lexicographic order)")
        ->required();
    rec->add_option("--motion-threshold", rec_cfg.motion_threshold,
                    "mean intensity change that triggers a burst")
        ->capture_default_str();
    rec->add_option("--burst", rec_cfg.burst_size, "frames per recognize request")
        ->capture_default_str();
    rec->add_option("--tau", rec_tau, "exit 0 only if a match lands under this distance")
        ->capture_default_str();

    // bench
    auto* bench = app.add_subcommand("bench", "embedding and store query latency");
    std::string bench_ckpt;
    int bench_count = 100, bench_rows = 10000;
    std::size_t bench_k = 3;
    std::uint32_t bench_seed = 1;
    bench->add_option("--ckpt", bench_ckpt, "checkpoint path")->required();
    bench->add_option("--count", bench_count, "samples per section")->capture_default_str();
    bench->add_option("--store-rows", bench_rows, "synthetic store size")->capture_default_str();
    bench->add_option("--k", bench_k, "top-k per query")->capture_default_str();
    bench->add_option("--seed", bench_seed, "sample seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synth(synth_out, synth_cfg);
        if (train->parsed())
            return run_train(train_data, train_ckpt, train_report, train_cfg, train_subjects,
                             train_tau);
        if (eval->parsed())
            return run_eval(eval_ckpt, eval_data, eval_tau, eval_split, eval_seed, eval_subjects);
        if (serve->parsed()) return run_serve(serve_listen, serve_ckpt, serve_db, serve_cfg);
        if (reg->parsed()) return run_register(reg_server, reg_image, reg_user);
        if (rec->parsed()) return run_recognize(rec_server, rec_frames, rec_cfg, rec_tau);
        if (bench->parsed()) return run_bench(bench_ckpt, bench_count, bench_rows, bench_k,
                                              bench_seed);
    } catch (const fk::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const fk::CheckpointError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const fk::DatasetError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const fk::DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
