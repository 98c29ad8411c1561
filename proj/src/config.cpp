#include "georef/config.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "georef/io_util.hpp"

namespace georef {

namespace {

struct Entry {
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

double to_double(const std::string& v) {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::runtime_error("not a number: " + v);
    return d;
}

int to_int(const std::string& v) {
    std::size_t used = 0;
    const int i = std::stoi(v, &used);
    if (used != v.size()) throw std::runtime_error("not an integer: " + v);
    return i;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

const std::map<std::string, Entry>& registry() {
    static const std::map<std::string, Entry> table = [] {
        std::map<std::string, Entry> t;
        auto add_double = [&](const std::string& key, auto member) {
            t[key] = {[member](const PipelineConfig& c) { return fmt(c.*member); },
                      [member](PipelineConfig& c, const std::string& v) {
                          c.*member = to_double(v);
                      }};
        };
        auto add_int = [&](const std::string& key, auto member) {
            t[key] = {[member](const PipelineConfig& c) { return std::to_string(c.*member); },
                      [member](PipelineConfig& c, const std::string& v) { c.*member = to_int(v); }};
        };
        auto add_nested_double = [&](const std::string& key, auto getter) {
            t[key] = {[getter](const PipelineConfig& c) {
                          return fmt(getter(const_cast<PipelineConfig&>(c)));
                      },
                      [getter](PipelineConfig& c, const std::string& v) {
                          getter(c) = to_double(v);
                      }};
        };

        add_double("tau_move", &PipelineConfig::tau_move);
        add_int("max_scans", &PipelineConfig::max_scans);
        t["keep_classes"] = {
            [](const PipelineConfig& c) {
                std::string s;
                for (auto v : c.keep_classes) s += (s.empty() ? "" : "+") + std::to_string(v);
                return s;
            },
            [](PipelineConfig& c, const std::string& v) {
                c.keep_classes.clear();
                std::stringstream ss(v);
                std::string tok;
                while (std::getline(ss, tok, '+'))
                    c.keep_classes.insert(static_cast<std::uint8_t>(to_int(tok)));
                if (c.keep_classes.empty())
                    throw std::runtime_error("keep_classes must not be empty");
            }};

        add_nested_double("model_max_triangle_area",
                          [](PipelineConfig& c) -> double& { return c.model.max_triangle_area; });
        add_nested_double("model_dem_pitch",
                          [](PipelineConfig& c) -> double& { return c.model.dem_pitch; });
        add_nested_double("height_cell",
                          [](PipelineConfig& c) -> double& { return c.model.height_cell; });
        add_nested_double("model_coarsest_voxel", [](PipelineConfig& c) -> double& {
            return c.model.surfels.coarsest_voxel;
        });
        add_nested_double("model_finest_voxel", [](PipelineConfig& c) -> double& {
            return c.model.surfels.finest_voxel;
        });
        add_nested_double("surfel_coarsest_voxel", [](PipelineConfig& c) -> double& {
            return c.surfels.coarsest_voxel;
        });
        add_nested_double("surfel_finest_voxel", [](PipelineConfig& c) -> double& {
            return c.surfels.finest_voxel;
        });
        t["surfel_min_points"] = {
            [](const PipelineConfig& c) { return std::to_string(c.surfels.min_points); },
            [](PipelineConfig& c, const std::string& v) {
                c.surfels.min_points = static_cast<std::uint32_t>(to_int(v));
                c.model.surfels.min_points = c.surfels.min_points;
            }};

        t["registration_max_iterations"] = {
            [](const PipelineConfig& c) { return std::to_string(c.registration.max_iterations); },
            [](PipelineConfig& c, const std::string& v) {
                c.registration.max_iterations = to_int(v);
            }};
        add_nested_double("registration_update_tolerance", [](PipelineConfig& c) -> double& {
            return c.registration.update_tolerance;
        });
        add_nested_double("registration_huber_delta", [](PipelineConfig& c) -> double& {
            return c.registration.huber_delta;
        });
        add_nested_double("registration_normal_agreement", [](PipelineConfig& c) -> double& {
            return c.registration.normal_agreement;
        });
        t["registration_min_matches"] = {
            [](const PipelineConfig& c) { return std::to_string(c.registration.min_matches); },
            [](PipelineConfig& c, const std::string& v) {
                c.registration.min_matches = to_int(v);
            }};

        add_nested_double("plausibility_w",
                          [](PipelineConfig& c) -> double& { return c.plausibility.w; });
        add_nested_double("plausibility_epsilon",
                          [](PipelineConfig& c) -> double& { return c.plausibility.epsilon; });
        add_nested_double("plausibility_theta",
                          [](PipelineConfig& c) -> double& { return c.plausibility.theta; });
        add_nested_double("plausibility_gamma",
                          [](PipelineConfig& c) -> double& { return c.plausibility.gamma; });
        add_nested_double("tau_kappa",
                          [](PipelineConfig& c) -> double& { return c.plausibility.tau_kappa; });
        add_nested_double("voxel_filter_size", [](PipelineConfig& c) -> double& {
            return c.plausibility.voxel_filter_size;
        });

        add_nested_double("search_radius",
                          [](PipelineConfig& c) -> double& { return c.search.radius; });
        add_nested_double("search_step",
                          [](PipelineConfig& c) -> double& { return c.search.step; });
        t["yaw_steps"] = {
            [](const PipelineConfig& c) { return std::to_string(c.search.yaw_steps); },
            [](PipelineConfig& c, const std::string& v) { c.search.yaw_steps = to_int(v); }};
        t["trust_gnss_altitude"] = {
            [](const PipelineConfig& c) { return c.trust_gnss_altitude ? "1" : "0"; },
            [](PipelineConfig& c, const std::string& v) {
                c.trust_gnss_altitude = to_int(v) != 0;
            }};

        add_int("spline_order", &PipelineConfig::spline_order);
        add_double("knot_dt", &PipelineConfig::knot_dt);
        add_nested_double("imu_sigma_gyro",
                          [](PipelineConfig& c) -> double& { return c.imu_noise.sigma_gyro; });
        add_nested_double("imu_sigma_accel",
                          [](PipelineConfig& c) -> double& { return c.imu_noise.sigma_accel; });
        add_nested_double("imu_sigma_gyro_walk", [](PipelineConfig& c) -> double& {
            return c.imu_noise.sigma_gyro_walk;
        });
        add_nested_double("imu_sigma_accel_walk", [](PipelineConfig& c) -> double& {
            return c.imu_noise.sigma_accel_walk;
        });
        add_double("sigma_odom_translation", &PipelineConfig::sigma_odom_translation);
        add_double("sigma_odom_rotation", &PipelineConfig::sigma_odom_rotation);
        add_double("sigma_refined_translation", &PipelineConfig::sigma_refined_translation);
        add_double("sigma_refined_rotation", &PipelineConfig::sigma_refined_rotation);
        add_double("gnss_default_sigma", &PipelineConfig::gnss_default_sigma);
        add_double("graph_huber_delta", &PipelineConfig::graph_huber_delta);
        add_double("loop_radius", &PipelineConfig::loop_radius);
        add_double("loop_path_fraction", &PipelineConfig::loop_path_fraction);
        add_double("anchor_prior_sigma_translation",
                   &PipelineConfig::anchor_prior_sigma_translation);
        add_double("anchor_prior_sigma_rotation", &PipelineConfig::anchor_prior_sigma_rotation);
        t["raw_gnss_mode"] = {
            [](const PipelineConfig& c) { return c.raw_gnss_mode; },
            [](PipelineConfig& c, const std::string& v) {
                if (v != "always" && v != "fallback" && v != "never")
                    throw std::runtime_error("raw_gnss_mode must be always|fallback|never");
                c.raw_gnss_mode = v;
            }};
        add_int("optimizer_max_iterations", &PipelineConfig::optimizer_max_iterations);
        add_int("threads", &PipelineConfig::threads);
        return t;
    }();
    return table;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& value) {
    const auto& table = registry();
    const auto it = table.find(key);
    if (it == table.end()) throw std::runtime_error("unknown config key: " + key);
    try {
        it->second.set(*this, value);
    } catch (const std::exception& e) {
        throw std::runtime_error("config key " + key + ": " + e.what());
    }
}

void PipelineConfig::load_file(const std::string& path) {
    const auto json = nlohmann::json::parse(read_text_file(path));
    if (!json.is_object()) throw std::runtime_error(path + ": config must be a JSON object");
    for (const auto& [key, value] : json.items()) {
        if (value.is_string())
            set(key, value.get<std::string>());
        else
            set(key, value.dump());
    }
}

void PipelineConfig::load_environment() {
    for (const auto& [key, entry] : registry()) {
        std::string env_key = "GEOREF_";
        for (char c : key) env_key += static_cast<char>(std::toupper(c));
        if (const char* value = std::getenv(env_key.c_str())) set(key, value);
    }
}

std::vector<std::string> PipelineConfig::echo() const {
    std::vector<std::string> lines;
    for (const auto& [key, entry] : registry()) lines.push_back(key + "=" + entry.get(*this));
    return lines;
}

}  // namespace georef
