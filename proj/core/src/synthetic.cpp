#include "eduqg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include <fmt/format.h>

#include "eduqg/rng.hpp"

namespace eduqg {

namespace {

struct Verb {
  const char* plural;    // "absorb"
  const char* singular;  // "absorbs"
};

struct Domain {
  const char* field;
  const char* category;  // "structures", "substances", "devices"
  const char* observer;  // "Scientists"
  const char* locative;  // "can be studied in"
  std::vector<std::string> subjects;
  std::vector<std::string> objects;
  std::vector<Verb> verbs;
  std::vector<std::string> places;
};

const std::vector<Domain>& science_domains() {
  static const std::vector<Domain> domains = {
      {"Biology",
       "structures",
       "Scientists",
       "can be studied in",
       {"mitochondria", "chloroplasts", "ribosomes", "enzymes", "neurons", "red blood cells", "white blood cells",
        "stomata", "root hairs", "lysosomes", "vacuoles", "antibodies", "hormones", "platelets", "xylem vessels",
        "phloem tubes", "bacteria", "fungi", "algae", "earthworms", "pollinators", "decomposers", "kidneys",
        "lungs", "villi", "cilia", "chromosomes", "stem cells", "guard cells", "nerve fibres", "plasmids",
        "cell membranes", "golgi bodies", "flagella", "tendons", "capillaries", "sweat glands", "taste buds",
        "liver cells", "pancreatic cells", "spores", "lichens", "plankton", "tapeworms", "insulin"},
       {"energy for the cell", "light energy", "proteins", "electrical signals", "oxygen", "carbon dioxide",
        "water from the soil", "glucose", "waste products", "harmful microbes", "dead organic matter", "nutrients",
        "pollen", "amino acids", "fatty acids", "genetic information", "blood sugar levels", "body temperature",
        "digested food", "mineral salts", "starch", "toxins", "sound vibrations", "chemical messages",
        "cellulose", "chlorophyll", "lactic acid", "urea", "bile", "antigens", "sucrose", "nitrogen compounds",
        "growth signals", "salt balance", "bone minerals", "spinal fluid", "nectar", "lipids"},
       {{"produce", "produces"}, {"absorb", "absorbs"}, {"transport", "transports"}, {"break down", "breaks down"},
        {"store", "stores"}, {"release", "releases"}, {"detect", "detects"}, {"regulate", "regulates"},
        {"carry", "carries"}, {"remove", "removes"}},
       {"the leaves of plants", "the human body", "the small intestine", "the nucleus", "pond water", "the soil",
        "the bloodstream", "the brain"}},
      {"Chemistry",
       "substances",
       "Scientists",
       "can be studied in",
       {"catalysts", "acids", "bases", "metals", "noble gases", "halogens", "salts", "polymers", "isotopes",
        "alkali metals", "oxidizing agents", "hydrocarbons", "solvents", "buffers", "indicators", "crystals",
        "ions", "electrolytes", "alloys", "esters", "carbonates", "nitrates", "enzymes in detergents",
        "transition metals", "covalent compounds", "reducing agents", "zeolites", "peroxides", "sulfides",
        "amino resins", "chelating agents", "surfactants", "colloids", "aldehydes", "ketones", "phosphates",
        "silicates", "fluorides", "ammonium salts", "lanthanides"},
       {"chemical reactions", "hydrogen ions", "hydroxide ions", "electrons", "heat", "carbon atoms",
        "covalent bonds", "ionic bonds", "the pH of a solution", "gas bubbles", "colour changes", "electric charge",
        "water molecules", "oxygen atoms", "a precipitate", "long chains", "stable compounds", "rust",
        "activation energy", "dissolved minerals", "fuel", "acidic gases", "sulfur dioxide", "free radicals",
        "chlorine gas", "methane", "ammonia", "crystal lattices", "hydrogen bonds", "carbon monoxide",
        "metal oxides", "molar mass", "reaction rates", "ozone", "nitrogen gas", "limescale"},
       {{"speed up", "speeds up"}, {"release", "releases"}, {"accept", "accepts"}, {"donate", "donates"},
        {"form", "forms"}, {"dissolve", "dissolves"}, {"neutralize", "neutralizes"}, {"absorb", "absorbs"},
        {"produce", "produces"}, {"conduct", "conducts"}, {"lower", "lowers"}},
       {"the laboratory", "sea water", "the atmosphere", "a test tube", "industrial plants", "the periodic table",
        "aqueous solutions", "the earth's crust"}},
      {"Physics",
       "devices",
       "Scientists",
       "can be studied in",
       {"magnets", "lenses", "prisms", "conductors", "insulators", "batteries", "generators", "transformers",
        "pulleys", "levers", "mirrors", "springs", "photons", "sound waves", "radio waves", "thermometers",
        "turbines", "resistors", "capacitors", "solar panels", "electric motors", "wheels and axles", "fuses",
        "microphones", "loudspeakers", "antennas", "pendulums", "diodes", "transistors", "lasers",
        "optical fibres", "gyroscopes", "barometers", "hydraulic presses", "inductors", "semiconductors",
        "thermocouples", "prisms of glass", "galvanometers", "hot air balloons"},
       {"electric current", "kinetic energy", "thermal energy", "visible light", "mechanical energy",
        "magnetic fields", "electrical energy", "friction", "pressure", "infrared radiation", "the voltage",
        "temperature", "potential energy", "the effort needed", "vibrations", "signals", "the speed of a car",
        "ultraviolet light", "static charge", "air resistance", "images", "the flow of charge",
        "gamma rays", "microwaves", "angular momentum", "sound energy", "torque", "buoyancy", "inertia",
        "wavelength", "alternating current", "nuclear energy", "radiant heat", "centripetal force",
        "echoes", "light pulses"},
       {{"produce", "produces"}, {"convert", "converts"}, {"store", "stores"}, {"reflect", "reflects"},
        {"absorb", "absorbs"}, {"transmit", "transmits"}, {"reduce", "reduces"}, {"increase", "increases"},
        {"measure", "measures"}, {"resist", "resists"}, {"focus", "focuses"}},
       {"a circuit", "a power station", "a vacuum", "the classroom", "outer space", "a car engine",
        "everyday machines", "a telescope"}},
  };
  return domains;
}

std::vector<std::string> combine(const std::vector<std::string>& modifiers, const std::vector<std::string>& nouns) {
  std::vector<std::string> out;
  for (const auto& m : modifiers) {
    for (const auto& n : nouns) out.push_back(m + " " + n);
  }
  return out;
}

// Everyday facts for the general-domain QG set, with the same statement
// and question shapes as the science facts. Subjects and objects are
// modifier-noun pairs, so the set is too large to memorise.
const std::vector<Domain>& general_domains() {
  static const std::vector<Domain> domains = {
      {"Everyday",
       "workers",
       "Visitors",
       "can be found in",
       combine({"young", "local", "travelling", "skilled", "village", "busy", "retired", "foreign"},
               {"farmers", "bakers", "tailors", "carpenters", "fishermen", "potters", "blacksmiths", "shepherds",
                "weavers", "butchers", "gardeners", "miners", "sailors", "cooks", "shopkeepers", "painters",
                "masons", "brewers", "beekeepers", "millers", "cobblers", "glassmakers"}),
       combine({"fresh", "cheap", "heavy", "fine", "old", "small", "painted", "spare"},
               {"bread", "wheat", "furniture", "fishing nets", "clay pots", "iron tools", "wool", "carpets",
                "vegetables", "coal", "rope", "soup", "spices", "wooden boats", "stone walls", "honey", "flour",
                "leather shoes", "glass bottles", "cheese", "olive oil", "baskets"}),
       {{"make", "makes"}, {"sell", "sells"}, {"buy", "buys"}, {"repair", "repairs"}, {"carry", "carries"},
        {"store", "stores"}, {"trade", "trades"}, {"deliver", "delivers"}, {"prepare", "prepares"},
        {"collect", "collects"}},
       {"the village", "the market", "the harbour", "the old town", "the countryside", "the workshop",
        "the square", "the valley"}},
      {"Everyday",
       "animals",
       "Visitors",
       "can be found in",
       combine({"wild", "young", "hungry", "small", "grey", "old", "clever", "shy"},
               {"owls", "beavers", "foxes", "squirrels", "horses", "goats", "deer", "swallows", "otters",
                "badgers", "hedgehogs", "rabbits", "wolves", "crows", "ducks", "sheep", "cats", "dogs", "pigeons",
                "bears"}),
       combine({"ripe", "dry", "fallen", "soft", "tiny", "bitter"},
               {"nuts", "berries", "leaves", "insects", "fish", "grass", "seeds", "tree bark", "carrots",
                "acorns", "mice", "crumbs", "mushrooms", "twigs"}),
       {{"eat", "eats"}, {"hide", "hides"}, {"gather", "gathers"}, {"carry", "carries"}, {"guard", "guards"},
        {"find", "finds"}, {"store", "stores"}, {"chase", "chases"}},
       {"the forest", "the meadow", "the river bank", "the farmyard", "the mountains", "the park",
        "the hedgerows", "the wetlands"}},
  };
  return domains;
}

struct OffTopic {
  const char* field;
  std::vector<const char*> subjects;
  std::vector<const char*> objects;
  std::vector<Verb> verbs;
};

const std::vector<OffTopic>& off_target_domains() {
  static const std::vector<OffTopic> domains = {
      {"Computer Science",
       {"sorting algorithms", "compilers", "neural networks", "databases", "operating systems", "routers",
        "search engines", "hash tables"},
       {"memory usage", "query latency", "network traffic", "source code", "index structures", "user requests"},
       {{"optimize", "optimizes"}, {"schedule", "schedules"}, {"compress", "compresses"}, {"cache", "caches"}}},
      {"Economics",
       {"central banks", "labour markets", "tariffs", "households", "small firms", "stock exchanges", "subsidies"},
       {"interest rates", "consumer prices", "trade flows", "wage growth", "public debt", "household savings"},
       {{"influence", "influences"}, {"stabilize", "stabilizes"}, {"distort", "distorts"}, {"raise", "raises"}}},
      {"History",
       {"medieval guilds", "colonial empires", "city states", "monastic orders", "trade leagues", "royal courts"},
       {"regional politics", "long distance trade", "land ownership", "religious reform", "urban growth"},
       {{"shape", "shapes"}, {"control", "controls"}, {"challenge", "challenges"}, {"record", "records"}}},
  };
  return domains;
}

constexpr std::array kFirstNames = {
    "Maria", "John", "Ahmed", "Elena", "Kenji", "Fatima", "Pierre", "Olga", "Carlos", "Ingrid", "Tomas",
    "Amara", "Henrik", "Lucia", "Dmitri", "Aisha", "Giovanni", "Mei", "Rafael", "Sofia", "Viktor", "Nadia",
    "Felix", "Hana", "Oscar", "Leila", "Bruno", "Yara", "Anton", "Chiara", "Emil", "Rosa", "Idris", "Clara",
    "Mateo", "Greta", "Samir", "Irene", "Jonas", "Thea", "Karim", "Vera", "Lorenzo", "Maya", "Stefan",
    "Paula", "Ravi", "Nora", "Diego", "Agnes"};
constexpr std::array kLastNames = {
    "Lindqvist", "Okafor", "Moreau", "Tanaka", "Kowalski", "Haddad", "Petrov", "Alvarez", "Schreiber",
    "Nakamura", "Bianchi", "Johansson", "Mensah", "Dubois", "Novak", "Castillo", "Fischer", "Sato",
    "Romano", "Kaya", "Horvath", "Silva", "Rahman", "Weber", "Costa", "Ivanova", "Larsen", "Mendez",
    "Keller", "Oliveira", "Yilmaz", "Becker", "Ferreira", "Kovacs", "Andersen", "Laurent", "Hoffmann",
    "Morales", "Eriksen", "Vargas", "Brandt", "Marchetti", "Nieminen", "Duarte", "Ozturk", "Lambert",
    "Sandoval", "Wagner", "Rossi", "Hansen"};
constexpr std::array kOrgAdjectives = {
    "Royal", "Northern", "Grand", "National", "Imperial", "Eastern", "Central", "Free", "Western",
    "Southern", "Old", "New", "Great", "Civic", "Upper", "Lower", "Golden", "Silver", "Maritime", "Alpine"};
constexpr std::array kOrgNouns = {
    "Academy", "Railway", "Library", "Theatre", "Orchestra", "Observatory", "Museum", "Hospital",
    "University", "Bank", "Gazette", "Conservatory", "Botanical Garden", "Opera House", "Harbour Company",
    "Football Club", "Cathedral School", "Printing House", "Trading Company", "Art Society"};
constexpr std::array kCities = {
    "Lisbon", "Prague", "Bergen", "Kyoto", "Lagos", "Tallinn", "Porto", "Krakow", "Turin", "Ghent",
    "Seville", "Dresden", "Geneva", "Tampere", "Valencia", "Utrecht", "Bilbao", "Lyon", "Graz", "Malmo",
    "Antwerp", "Bologna", "Cork", "Leipzig", "Split", "Riga", "Aarhus", "Trieste", "Nantes", "Busan"};
constexpr std::array kStudies = {"law", "medicine", "architecture", "music", "engineering", "philosophy",
                                 "painting", "mathematics", "theology", "commerce"};

struct PastVerb {
  const char* past;
  const char* base;
};
constexpr std::array kPastVerbs = {PastVerb{"founded", "found"},   PastVerb{"established", "establish"},
                                   PastVerb{"designed", "design"}, PastVerb{"built", "build"},
                                   PastVerb{"directed", "direct"}, PastVerb{"reorganized", "reorganize"},
                                   PastVerb{"financed", "finance"}};

template <typename C>
const auto& choose(Rng& rng, const C& items) {
  return items[static_cast<std::size_t>(rng.uniform_index(items.size()))];
}

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += ' ';
    out += p;
  }
  return out;
}

struct Fact {
  const Domain* domain = nullptr;
  std::string subject;
  std::string object;
  Verb verb;
};

std::string statement(const Fact& f) {
  return capitalize(fmt::format("{} {} {}.", f.subject, f.verb.plural, f.object));
}

std::string statement_variant(const Fact& f, Rng& rng) {
  switch (rng.uniform_index(4)) {
    case 0:
      return fmt::format("Our measurements confirm that {} {} {}.", f.subject, f.verb.plural, f.object);
    case 1:
      return fmt::format("It is well known that {} {} {}.", f.subject, f.verb.plural, f.object);
    case 2:
      return fmt::format("We show that {} {} {} under controlled conditions.", f.subject, f.verb.plural, f.object);
    default:
      return statement(f);
  }
}

struct Question {
  std::string question;
  std::string answer;
};

Question fact_question(const Fact& f, Rng& rng) {
  const Domain& d = *f.domain;
  switch (rng.uniform_index(3)) {
    case 0:
      return {fmt::format("What {} {}?", f.verb.singular, f.object), f.subject};
    case 1:
      return {fmt::format("What do {} {}?", f.subject, f.verb.plural), f.object};
    default:
      return {fmt::format("Which {} {} {}?", d.category, f.verb.plural, f.object), f.subject};
  }
}

std::string fact_filler(const Fact& f, Rng& rng) {
  const Domain& d = *f.domain;
  switch (rng.uniform_index(4)) {
    case 0:
      return capitalize(fmt::format("{} are common in {}.", f.subject, choose(rng, d.places)));
    case 1:
      return capitalize(fmt::format("{} {} {}.", f.object, d.locative, choose(rng, d.places)));
    case 2:
      return fmt::format("{} compare {} with {}.", d.observer, f.subject, choose(rng, d.subjects));
    default:
      return fmt::format("There is a link between {} and {}.", f.object, choose(rng, d.objects));
  }
}

std::string make_id(std::string_view prefix, std::size_t i) {
  return fmt::format("{}{:06d}", prefix, i);
}

std::vector<Fact> make_facts(const std::vector<Domain>& domains, Rng& rng) {
  std::vector<Fact> facts;
  std::set<std::string> seen;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    const std::size_t target = std::min<std::size_t>(domains[d].subjects.size() * 12, 3000);
    const std::size_t start = facts.size();
    for (std::size_t tries = 0; facts.size() - start < target && tries < target * 40; ++tries) {
      Fact f{&domains[d], choose(rng, domains[d].subjects), choose(rng, domains[d].objects), choose(rng, domains[d].verbs)};
      const std::string key = fmt::format("{}|{}|{}", f.subject, f.verb.plural, f.object);
      if (seen.insert(key).second) facts.push_back(f);
    }
  }
  return facts;
}

Json science_abstract(const std::vector<Fact>& facts, Rng& rng, std::size_t index) {
  const Fact& head = choose(rng, facts);
  std::vector<std::string> parts;
  parts.push_back(fmt::format("We investigate how {} {} {}.", head.subject, head.verb.plural, head.object));
  const std::size_t extra = 2 + rng.uniform_index(3);
  for (std::size_t i = 0; i < extra; ++i) {
    const Fact* f = &choose(rng, facts);
    for (int tries = 0; f->domain != head.domain && tries < 8; ++tries) f = &choose(rng, facts);
    parts.push_back(rng.uniform() < 0.7 ? statement_variant(*f, rng) : fact_filler(*f, rng));
  }
  parts.push_back(fmt::format("These results clarify the role of {} in {}.", head.subject,
                              choose(rng, head.domain->places)));
  Json j;
  j["paper_id"] = make_id("s2-", index);
  j["title"] = capitalize(fmt::format("On how {} {} {}", head.subject, head.verb.plural, head.object));
  j["abstract"] = join(parts);
  Json fields = Json::array({head.domain->field});
  if (rng.uniform() < 0.1) fields.push_back(science_domains()[rng.uniform_index(3)].field);
  j["mag_field_of_study"] = fields;
  return j;
}

Json off_target_abstract(Rng& rng, std::size_t index) {
  const auto& d = choose(rng, off_target_domains());
  std::vector<std::string> parts;
  const std::string s = choose(rng, d.subjects);
  const Verb v = choose(rng, d.verbs);
  const std::string o = choose(rng, d.objects);
  parts.push_back(fmt::format("This paper examines how {} {} {}.", s, v.plural, o));
  for (std::size_t i = 0; i < 2 + rng.uniform_index(2); ++i) {
    const Verb v2 = choose(rng, d.verbs);
    parts.push_back(capitalize(fmt::format("{} {} {} in most settings.", choose(rng, d.subjects), v2.plural,
                                           choose(rng, d.objects))));
  }
  Json j;
  j["paper_id"] = make_id("s2-", index);
  j["title"] = capitalize(fmt::format("{} and {}", s, o));
  j["abstract"] = join(parts);
  j["mag_field_of_study"] = Json::array({d.field});
  return j;
}

struct Event {
  std::string person;
  std::string org;
  std::string city;
  int year = 0;
  PastVerb verb;
};

Event random_event(Rng& rng) {
  return {fmt::format("{} {}", choose(rng, kFirstNames), choose(rng, kLastNames)),
          fmt::format("the {} {}", choose(rng, kOrgAdjectives), choose(rng, kOrgNouns)), choose(rng, kCities),
          1700 + static_cast<int>(rng.uniform_index(300)), choose(rng, kPastVerbs)};
}

std::string event_sentence(const Event& e) {
  return fmt::format("{} {} {} in {} in {}.", e.person, e.verb.past, e.org, e.city, e.year);
}

Question event_question(const Event& e, Rng& rng) {
  switch (rng.uniform_index(4)) {
    case 0:
      return {fmt::format("Who {} {}?", e.verb.past, e.org), e.person};
    case 1:
      return {fmt::format("In what year did {} {} {}?", e.person, e.verb.base, e.org), std::to_string(e.year)};
    case 2:
      return {fmt::format("Where did {} {} {}?", e.person, e.verb.base, e.org), e.city};
    default:
      return {fmt::format("What did {} {} in {}?", e.person, e.verb.base, e.year), e.org};
  }
}

std::string event_filler(const Event& e, Rng& rng) {
  const std::string last = e.person.substr(e.person.find(' ') + 1);
  switch (rng.uniform_index(4)) {
    case 0:
      return fmt::format("{} was born in {} and studied {}.", last, choose(rng, kCities), choose(rng, kStudies));
    case 1:
      return capitalize(fmt::format("{} moved to {} in {}.", e.org, choose(rng, kCities),
                                    e.year + 1 + static_cast<int>(rng.uniform_index(60))));
    case 2:
      return fmt::format("The city of {} later honoured {} with a statue.", e.city, last);
    default:
      return capitalize(fmt::format("{} remained open until {}.", e.org,
                                    e.year + 20 + static_cast<int>(rng.uniform_index(150))));
  }
}

// QG example built from an opening sentence plus fillers; the question is
// about the opening sentence with probability `first`, otherwise about a
// second event/fact placed later in the context.
struct Drafted {
  std::string context;
  Question qa;
};

Drafted draft_sciq(const std::vector<Fact>& facts, Rng& rng, double first);

Drafted draft_squad(const std::vector<Fact>& general, Rng& rng, double first, double general_fraction) {
  if (rng.uniform() < general_fraction) return draft_sciq(general, rng, first);
  const Event e = random_event(rng);
  std::vector<std::string> parts = {event_sentence(e)};
  const std::size_t fillers = 1 + rng.uniform_index(3);
  for (std::size_t i = 0; i < fillers; ++i) parts.push_back(event_filler(e, rng));
  if (rng.uniform() < first) {
    return {join(parts), event_question(e, rng)};
  }
  const Event second = random_event(rng);
  parts.push_back(event_sentence(second));
  return {join(parts), event_question(second, rng)};
}

Drafted draft_sciq(const std::vector<Fact>& facts, Rng& rng, double first) {
  const Fact& f = choose(rng, facts);
  std::vector<std::string> parts = {statement(f)};
  const std::size_t fillers = 1 + rng.uniform_index(3);
  for (std::size_t i = 0; i < fillers; ++i) parts.push_back(fact_filler(f, rng));
  if (rng.uniform() < first) {
    return {join(parts), fact_question(f, rng)};
  }
  const Fact& g = choose(rng, facts);
  parts.push_back(statement(g));
  return {join(parts), fact_question(g, rng)};
}

Json squad_document(const std::vector<Fact>& general, Rng& rng, std::size_t n, const std::string& prefix,
                    double first, double general_fraction) {
  Json data = Json::array();
  std::size_t made = 0;
  for (std::size_t article = 0; made < n; ++article) {
    Json paragraphs = Json::array();
    for (std::size_t p = 0; p < 5 && made < n; ++p, ++made) {
      const Drafted d = draft_squad(general, rng, first, general_fraction);
      const auto pos = d.context.find(d.qa.answer);
      Json qa = {{"id", make_id(prefix, made)},
                 {"question", d.qa.question},
                 {"answers", Json::array({{{"text", d.qa.answer},
                                           {"answer_start", pos == std::string::npos ? 0 : pos}}})}};
      paragraphs.push_back({{"context", d.context}, {"qas", Json::array({qa})}});
    }
    data.push_back({{"title", fmt::format("Article_{}", article)}, {"paragraphs", paragraphs}});
  }
  return {{"version", "1.1"}, {"data", data}};
}

Json sciq_array(const std::vector<Fact>& facts, Rng& rng, std::size_t n, double first) {
  Json arr = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const Drafted d = draft_sciq(facts, rng, first);
    const Domain& dom = *facts.front().domain;
    arr.push_back({{"question", d.qa.question},
                   {"distractor1", choose(rng, dom.subjects)},
                   {"distractor2", choose(rng, dom.objects)},
                   {"distractor3", choose(rng, dom.subjects)},
                   {"correct_answer", d.qa.answer},
                   {"support", d.context}});
  }
  return arr;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticOptions& options) {
  SyntheticCorpus out;
  Rng fact_rng(derive_seed(options.seed, 1));
  std::vector<Fact> facts = make_facts(science_domains(), fact_rng);
  fact_rng.shuffle(facts);
  const std::vector<Fact> general = make_facts(general_domains(), fact_rng);

  // Disjoint fact pools for the science QG splits; abstracts and the
  // reference text draw from every fact.
  const std::size_t n = facts.size();
  const std::vector<Fact> train_facts(facts.begin(), facts.begin() + static_cast<std::ptrdiff_t>(n * 7 / 10));
  const std::vector<Fact> val_facts(facts.begin() + static_cast<std::ptrdiff_t>(n * 7 / 10),
                                    facts.begin() + static_cast<std::ptrdiff_t>(n * 8 / 10));
  const std::vector<Fact> test_facts(facts.begin() + static_cast<std::ptrdiff_t>(n * 8 / 10), facts.end());

  Rng abs_rng(derive_seed(options.seed, 2));
  out.abstracts.reserve(options.abstracts);
  for (std::size_t i = 0; i < options.abstracts; ++i) {
    out.abstracts.push_back(abs_rng.uniform() < options.off_target_fraction ? off_target_abstract(abs_rng, i)
                                                                            : science_abstract(facts, abs_rng, i));
  }

  Rng squad_rng(derive_seed(options.seed, 3));
  out.squad_train = squad_document(general, squad_rng, options.squad_train, "sq-train-",
                                   options.first_sentence_fraction, options.squad_general_fraction);
  out.squad_dev = squad_document(general, squad_rng, options.squad_dev, "sq-dev-", options.first_sentence_fraction,
                                 options.squad_general_fraction);

  Rng sciq_rng(derive_seed(options.seed, 4));
  out.sciq_train = sciq_array(train_facts, sciq_rng, options.sciq_train, options.first_sentence_fraction);
  out.sciq_validation = sciq_array(val_facts, sciq_rng, options.sciq_validation, options.first_sentence_fraction);
  out.sciq_test = sciq_array(test_facts, sciq_rng, options.sciq_test, options.first_sentence_fraction);

  // Reference text: general and science prose in equal parts, including
  // question forms, over the full science fact base but an independent draw
  // of people and organisations.
  Rng ref_rng(derive_seed(options.seed, 5));
  for (std::size_t i = 0; i < options.reference_sentences; ++i) {
    const bool science = i % 2 == 0;
    const bool question = ref_rng.uniform() < 0.3;
    if (science) {
      const Fact& f = choose(ref_rng, facts);
      out.reference.push_back(question ? fact_question(f, ref_rng).question
                                       : (ref_rng.uniform() < 0.5 ? statement_variant(f, ref_rng)
                                                                  : fact_filler(f, ref_rng)));
    } else if (ref_rng.uniform() < 0.5) {
      const Fact& f = choose(ref_rng, general);
      out.reference.push_back(question ? fact_question(f, ref_rng).question
                                       : (ref_rng.uniform() < 0.5 ? statement(f) : fact_filler(f, ref_rng)));
    } else {
      const Event e = random_event(ref_rng);
      out.reference.push_back(question ? event_question(e, ref_rng).question
                                       : (ref_rng.uniform() < 0.5 ? event_sentence(e) : event_filler(e, ref_rng)));
    }
  }
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "s2orc");
  fs::create_directories(dir / "squad");
  fs::create_directories(dir / "sciq");
  fs::create_directories(dir / "reference");
  std::string lines;
  for (const auto& j : corpus.abstracts) lines += j.dump() + "\n";
  write_file_atomic(dir / "s2orc" / "abstracts.jsonl", lines);
  write_json(dir / "squad" / "train-v1.1.json", corpus.squad_train);
  write_json(dir / "squad" / "dev-v1.1.json", corpus.squad_dev);
  write_json(dir / "sciq" / "train.json", corpus.sciq_train);
  write_json(dir / "sciq" / "valid.json", corpus.sciq_validation);
  write_json(dir / "sciq" / "test.json", corpus.sciq_test);
  std::string ref;
  for (const auto& s : corpus.reference) ref += s + "\n";
  write_file_atomic(dir / "reference" / "reference.txt", ref);
}

}  // namespace eduqg
