#include "vdss/memory_store.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vdss/contracts_json.hpp"
#include "vdss/errors.hpp"
#include "vdss/util.hpp"

namespace vdss {

using nlohmann::json;

std::string content_hash(const json& payload) { return sha256_hex(payload.dump()); }

json Envelope::to_json() const {
    return json{{"offset", offset},           {"timestamp", timestamp},       {"kind", to_string(kind)},
                {"encounter_id", encounter_id}, {"clinician_id", clinician_id}, {"cycle_id", cycle_id},
                {"payload", payload},          {"content_hash", content_hash}};
}

namespace {

std::optional<Envelope> parse_envelope(const std::string& line, std::uint64_t expected_offset) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    try {
        Envelope e;
        e.offset = j.at("offset").get<std::uint64_t>();
        e.timestamp = j.at("timestamp").get<double>();
        auto kind = parse_enum<EnvelopeKind>(j.at("kind").get<std::string>());
        if (!kind) return std::nullopt;
        e.kind = *kind;
        e.encounter_id = j.at("encounter_id").get<std::string>();
        e.clinician_id = j.at("clinician_id").get<std::string>();
        e.cycle_id = j.at("cycle_id").get<std::string>();
        e.payload = j.at("payload");
        e.content_hash = j.at("content_hash").get<std::string>();
        if (e.offset != expected_offset) return std::nullopt;
        return e;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void validate_payload(const EnvelopeDraft& d) {
    switch (d.kind) {
        case EnvelopeKind::cycle_record:
            decode_or_throw<CycleRecord>(d.payload);
            break;
        case EnvelopeKind::preference_snapshot:
            decode_preference_state(d.payload);
            break;
        case EnvelopeKind::note:
            if (!d.payload.is_object() || !d.payload.contains("note") || !d.payload.at("note").is_string())
                throw ContractError("note payload must carry a string 'note'");
            break;
    }
}

}  // namespace

MemoryStore::MemoryStore(std::filesystem::path path) : path_(std::move(path)) {
    if (!path_.empty()) load();
}

void MemoryStore::load() {
    std::string data;
    {
        std::ifstream in(path_, std::ios::binary);
        if (in) {
            std::stringstream ss;
            ss << in.rdbuf();
            data = ss.str();
        }
    }
    const auto last_nl = data.rfind('\n');
    const std::size_t complete = last_nl == std::string::npos ? 0 : last_nl + 1;
    if (complete < data.size()) {
        load_report_.truncated_bytes = data.size() - complete;
        std::error_code ec;
        if (std::filesystem::exists(path_)) std::filesystem::resize_file(path_, complete, ec);
        if (ec) throw PersistenceError("cannot truncate torn log tail: " + ec.message());
        data.resize(complete);
    }
    std::size_t pos = 0;
    while (pos < data.size()) {
        const auto nl = data.find('\n', pos);
        std::string line = data.substr(pos, nl - pos);
        pos = nl + 1;
        Slot slot;
        slot.envelope = parse_envelope(line, slots_.size());
        slot.raw = std::move(line);
        if (slot.envelope) {
            const auto& e = *slot.envelope;
            if (e.kind == EnvelopeKind::preference_snapshot) latest_snapshot_[e.clinician_id] = e.offset;
            by_encounter_[e.encounter_id].push_back(e.offset);
        } else {
            ++load_report_.corrupt_entries;
        }
        slots_.push_back(std::move(slot));
    }
    load_report_.entries = slots_.size();
}

void MemoryStore::fail_next_write_after(std::size_t bytes) {
    std::lock_guard lock(mu_);
    fail_after_ = bytes;
}

void MemoryStore::write_lines(const std::string& data) {
    auto fail_after = std::exchange(fail_after_, std::nullopt);
    if (path_.empty()) {
        if (fail_after) throw PersistenceError("injected write failure");
        return;
    }
    const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw PersistenceError("cannot open log " + path_.string() + ": " + std::strerror(errno));
    struct stat st {};
    ::fstat(fd, &st);
    const off_t before = st.st_size;
    auto rollback = [&](const std::string& why) {
        if (::ftruncate(fd, before) != 0) {
            // Leaves a torn tail; it is dropped on the next open.
        }
        ::close(fd);
        throw PersistenceError(why);
    };
    const std::size_t limit = fail_after ? std::min(*fail_after, data.size()) : data.size();
    std::size_t written = 0;
    while (written < limit) {
        const ssize_t n = ::write(fd, data.data() + written, limit - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            rollback(std::string("log write failed: ") + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    if (fail_after) rollback("injected write failure");
    if (::fsync(fd) != 0) rollback(std::string("log fsync failed: ") + std::strerror(errno));
    ::close(fd);
}

std::uint64_t MemoryStore::append(const EnvelopeDraft& draft) { return append_batch({draft}).front(); }

std::vector<std::uint64_t> MemoryStore::append_batch(const std::vector<EnvelopeDraft>& drafts) {
    for (const auto& d : drafts) validate_payload(d);
    std::lock_guard lock(mu_);
    std::vector<Slot> fresh;
    std::string data;
    std::vector<std::uint64_t> offsets;
    for (const auto& d : drafts) {
        Envelope e;
        e.offset = slots_.size() + fresh.size();
        e.timestamp = d.timestamp;
        e.kind = d.kind;
        e.encounter_id = d.encounter_id;
        e.clinician_id = d.clinician_id;
        e.cycle_id = d.cycle_id;
        e.payload = d.payload;
        e.content_hash = content_hash(d.payload);
        Slot s;
        s.raw = e.to_json().dump();
        data += s.raw + "\n";
        offsets.push_back(e.offset);
        s.envelope = std::move(e);
        fresh.push_back(std::move(s));
    }
    write_lines(data);
    for (auto& s : fresh) {
        const auto& e = *s.envelope;
        if (e.kind == EnvelopeKind::preference_snapshot) latest_snapshot_[e.clinician_id] = e.offset;
        by_encounter_[e.encounter_id].push_back(e.offset);
        slots_.push_back(std::move(s));
    }
    return offsets;
}

std::uint64_t MemoryStore::size() const {
    std::lock_guard lock(mu_);
    return slots_.size();
}

Envelope MemoryStore::verified(std::uint64_t offset) const {
    if (offset >= slots_.size()) throw IntegrityError(offset, "no such offset");
    const auto& slot = slots_[offset];
    if (!slot.envelope) throw IntegrityError(offset, "unparseable envelope");
    const auto& e = *slot.envelope;
    if (content_hash(e.payload) != e.content_hash) throw IntegrityError(offset, "content hash mismatch");
    return e;
}

Envelope MemoryStore::read(std::uint64_t offset) const {
    std::lock_guard lock(mu_);
    return verified(offset);
}

std::vector<Envelope> MemoryStore::entries() const {
    std::lock_guard lock(mu_);
    std::vector<Envelope> out;
    out.reserve(slots_.size());
    for (std::uint64_t i = 0; i < slots_.size(); ++i) out.push_back(verified(i));
    return out;
}

std::vector<Envelope> MemoryStore::entries_for_encounter(const std::string& encounter_id) const {
    std::lock_guard lock(mu_);
    std::vector<Envelope> out;
    if (auto it = by_encounter_.find(encounter_id); it != by_encounter_.end())
        for (auto off : it->second) out.push_back(verified(off));
    return out;
}

std::vector<Envelope> MemoryStore::entries_for_cycle(const std::string& cycle_id) const {
    std::lock_guard lock(mu_);
    std::vector<Envelope> out;
    for (std::uint64_t i = 0; i < slots_.size(); ++i)
        if (slots_[i].envelope && slots_[i].envelope->cycle_id == cycle_id) out.push_back(verified(i));
    return out;
}

ShortTermContext MemoryStore::context_window(const std::string& encounter_id, std::size_t n) const {
    std::lock_guard lock(mu_);
    ShortTermContext ctx;
    auto it = by_encounter_.find(encounter_id);
    if (it == by_encounter_.end()) return ctx;
    for (auto off = it->second.rbegin(); off != it->second.rend(); ++off) {
        const auto& e = *slots_[*off].envelope;
        if (e.kind == EnvelopeKind::note && ctx.notes.size() < n) {
            auto v = verified(*off);
            ctx.notes.push_back({v.offset, v.cycle_id, v.payload.at("note").get<std::string>()});
        } else if (e.kind == EnvelopeKind::cycle_record && !ctx.last_accepted) {
            auto v = verified(*off);
            if (v.payload.value("status", "") == "accepted" && v.payload.contains("accepted_settings")) {
                ctx.last_accepted = decode_or_throw<VentilatorSettings>(v.payload.at("accepted_settings"));
                ctx.last_accepted_offset = v.offset;
            }
        }
        if (ctx.notes.size() >= n && ctx.last_accepted) break;
    }
    return ctx;
}

std::optional<std::uint64_t> MemoryStore::latest_snapshot_offset(const std::string& clinician_id) const {
    std::lock_guard lock(mu_);
    auto it = latest_snapshot_.find(clinician_id);
    if (it == latest_snapshot_.end()) return std::nullopt;
    return it->second;
}

PreferenceState MemoryStore::load_preference_state(const std::string& clinician_id,
                                                   const BanditHyperparams& hyper) const {
    std::lock_guard lock(mu_);
    auto it = latest_snapshot_.find(clinician_id);
    const std::uint64_t from = it == latest_snapshot_.end() ? 0 : it->second + 1;
    // An unreadable line after the latest known snapshot might be a newer one.
    for (std::uint64_t i = from; i < slots_.size(); ++i)
        if (!slots_[i].envelope) throw IntegrityError(i, "unparseable envelope may hide a newer snapshot");
    if (it == latest_snapshot_.end()) return PreferenceState::fresh(clinician_id, hyper);
    auto e = verified(it->second);
    try {
        return decode_preference_state(e.payload);
    } catch (const ContractError& ex) {
        throw IntegrityError(e.offset, ex.what());
    }
}

std::vector<CycleRecord> MemoryStore::cycle_records(const std::string& clinician_id) const {
    std::lock_guard lock(mu_);
    std::vector<CycleRecord> out;
    for (std::uint64_t i = 0; i < slots_.size(); ++i) {
        const auto& slot = slots_[i];
        if (!slot.envelope) throw IntegrityError(i, "unparseable envelope");
        if (slot.envelope->kind != EnvelopeKind::cycle_record) continue;
        if (!clinician_id.empty() && slot.envelope->clinician_id != clinician_id) continue;
        out.push_back(decode_or_throw<CycleRecord>(verified(i).payload));
    }
    return out;
}

std::optional<CycleRecord> MemoryStore::find_cycle_record(const std::string& cycle_id) const {
    std::lock_guard lock(mu_);
    for (std::uint64_t i = slots_.size(); i-- > 0;) {
        const auto& slot = slots_[i];
        if (slot.envelope && slot.envelope->kind == EnvelopeKind::cycle_record && slot.envelope->cycle_id == cycle_id)
            return decode_or_throw<CycleRecord>(verified(i).payload);
    }
    return std::nullopt;
}

json MemoryStore::export_trail(const std::string& encounter_id) const {
    json entries = json::array();
    for (const auto& e : entries_for_encounter(encounter_id)) entries.push_back(e.to_json());
    return json{{"encounter_id", encounter_id}, {"entries", std::move(entries)}};
}

std::mutex& MemoryStore::clinician_mutex(const std::string& clinician_id) {
    std::lock_guard lock(locks_mu_);
    auto& slot = clinician_locks_[clinician_id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

PreferenceState replay_preference_state(const MemoryStore& store, const std::string& clinician_id,
                                        const BanditHyperparams& hyper, bool apply_hold_signal) {
    auto state = PreferenceState::fresh(clinician_id, hyper);
    for (const auto& r : store.cycle_records(clinician_id)) {
        if (!r.bandit_updated) continue;
        const auto& x = r.context.feature_vector;
        if (r.status == CycleStatus::accepted) {
            state = bandit_update(state, x, r.accepted_settings, r.trace, r.preference_signal);
        } else if (r.status == CycleStatus::hold && apply_hold_signal) {
            state = apply_signal(state, x, r.preference_signal);
        }
    }
    return state;
}

}  // namespace vdss
