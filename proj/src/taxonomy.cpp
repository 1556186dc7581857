#include "medsearch/taxonomy.hpp"

#include <algorithm>

namespace medsearch {

bool is_category(std::string_view name) {
    return std::find(kCategories.begin(), kCategories.end(), name) != kCategories.end();
}

std::vector<std::string> all_categories() {
    return {kCategories.begin(), kCategories.end()};
}

namespace vocab {

const std::array<CategoryVocab, 13>& category_vocab() {
    static const std::array<CategoryVocab, 13> table = {{
        {kCategories[0],
         {{{"appendicitis", nullptr, "апендицит"},
           {"hernia", nullptr, "херния"},
           {"colic", nullptr, "колика"},
           {"bloating", "distension", nullptr},
           {"cramp", nullptr, "спазъм"},
           {"peritonitis", nullptr, nullptr},
           {"gallstone", nullptr, nullptr},
           {"indigestion", "dyspepsia", nullptr}}}},
        {kCategories[1],
         {{{"hypertension", "hypertonia", "хипертония"},
           {"palpitation", nullptr, "сърцебиене"},
           {"arrhythmia", nullptr, "аритмия"},
           {"angina", nullptr, nullptr},
           {"tachycardia", nullptr, nullptr},
           {"bradycardia", nullptr, nullptr},
           {"ischemia", nullptr, nullptr},
           {"murmur", nullptr, nullptr}}}},
        {kCategories[2],
         {{{"nausea", "queasiness", "гадене"},
           {"diarrhea", nullptr, "диария"},
           {"ulcer", nullptr, "язва"},
           {"heartburn", "pyrosis", nullptr},
           {"constipation", nullptr, nullptr},
           {"gastritis", nullptr, nullptr},
           {"reflux", nullptr, nullptr},
           {"vomiting", nullptr, nullptr}}}},
        {kCategories[3],
         {{{"headache", "cephalalgia", "главоболие"},
           {"migraine", nullptr, "мигрена"},
           {"vertigo", "dizziness", "световъртеж"},
           {"sinusitis", nullptr, nullptr},
           {"earache", nullptr, nullptr},
           {"toothache", nullptr, nullptr},
           {"tinnitus", nullptr, nullptr},
           {"stiffness", nullptr, nullptr}}}},
        {kCategories[4],
         {{{"fever", "pyrexia", "треска"},
           {"anemia", nullptr, "анемия"},
           {"allergy", nullptr, "алергия"},
           {"inflammation", nullptr, nullptr},
           {"leukemia", nullptr, nullptr},
           {"sepsis", nullptr, nullptr},
           {"lymphedema", nullptr, nullptr},
           {"fatigue", "exhaustion", nullptr}}}},
        {kCategories[5],
         {{{"arthritis", nullptr, "артрит"},
           {"fracture", nullptr, "фрактура"},
           {"gout", nullptr, "подагра"},
           {"backache", "lumbago", nullptr},
           {"sprain", nullptr, nullptr},
           {"scoliosis", nullptr, nullptr},
           {"osteoporosis", nullptr, nullptr},
           {"tendonitis", nullptr, nullptr}}}},
        {kCategories[6],
         {{{"seizure", "convulsion", "гърч"},
           {"tremor", nullptr, "тремор"},
           {"paralysis", nullptr, "парализа"},
           {"neuropathy", nullptr, nullptr},
           {"epilepsy", nullptr, nullptr},
           {"neuralgia", nullptr, nullptr},
           {"numbness", "tingling", nullptr},
           {"sciatica", nullptr, nullptr}}}},
        {kCategories[7],
         {{{"insomnia", "sleeplessness", "безсъние"},
           {"amnesia", nullptr, "амнезия"},
           {"anxiety", nullptr, "тревожност"},
           {"confusion", nullptr, nullptr},
           {"delirium", nullptr, nullptr},
           {"lethargy", "drowsiness", nullptr},
           {"stupor", nullptr, nullptr},
           {"apathy", nullptr, nullptr}}}},
        {kCategories[8],
         {{{"diabetes", nullptr, "диабет"},
           {"obesity", nullptr, "затлъстяване"},
           {"rickets", nullptr, "рахит"},
           {"malnutrition", "undernourishment", nullptr},
           {"anorexia", nullptr, nullptr},
           {"dehydration", nullptr, nullptr},
           {"hypoglycemia", nullptr, nullptr},
           {"goiter", nullptr, nullptr}}}},
        {kCategories[9],
         {{{"infertility", "sterility", "безплодие"},
           {"cyst", nullptr, "киста"},
           {"menopause", nullptr, "менопауза"},
           {"endometriosis", nullptr, nullptr},
           {"amenorrhea", nullptr, nullptr},
           {"dysmenorrhea", nullptr, nullptr},
           {"prostatitis", nullptr, nullptr},
           {"mastitis", nullptr, nullptr}}}},
        {kCategories[10],
         {{{"cough", "tussis", "кашлица"},
           {"influenza", "flu", "грип"},
           {"asthma", nullptr, "астма"},
           {"pneumonia", nullptr, "пневмония"},
           {"bronchitis", nullptr, nullptr},
           {"wheezing", nullptr, nullptr},
           {"dyspnea", "breathlessness", nullptr},
           {"chest", nullptr, nullptr}}}},
        {kCategories[11],
         {{{"rash", "eruption", "обрив"},
           {"eczema", nullptr, "екзема"},
           {"acne", nullptr, "акне"},
           {"itching", "pruritus", nullptr},
           {"psoriasis", nullptr, nullptr},
           {"dermatitis", nullptr, nullptr},
           {"hives", nullptr, nullptr},
           {"blister", nullptr, nullptr}}}},
        {kCategories[12],
         {{{"cystitis", nullptr, "цистит"},
           {"nephritis", nullptr, "нефрит"},
           {"dysuria", nullptr, "дизурия"},
           {"nephrolithiasis", "kidney stone", nullptr},
           {"incontinence", nullptr, nullptr},
           {"hematuria", nullptr, nullptr},
           {"urethritis", nullptr, nullptr},
           {"oliguria", nullptr, nullptr}}}},
    }};
    return table;
}

const std::vector<RelationSpec>& term_relations() {
    static const std::vector<RelationSpec> rels = {
        {"fever", "cough", "co-symptom"},
        {"cough", "fever", "co-symptom"},
        {"cramp", "colic", "co-symptom"},
        {"colic", "cramp", "co-symptom"},
        {"headache", "nausea", "co-symptom"},
        {"nausea", "headache", "co-symptom"},
        {"vertigo", "nausea", "co-symptom"},
        {"cough", "wheezing", "co-symptom"},
        {"wheezing", "cough", "co-symptom"},
        {"rash", "itching", "co-symptom"},
        {"itching", "rash", "co-symptom"},
        {"diabetes", "obesity", "risk-factor"},
        {"hypertension", "ischemia", "risk-factor"},
    };
    return rels;
}

const std::vector<const char*>& english_stopwords() {
    // "between", "do" and "on" are the seed stoplist; the rest is a standard
    // short English stoplist.
    static const std::vector<const char*> words = {
        "between", "do",   "on",   "and",  "the",  "a",    "an",  "of",
        "in",      "is",   "with", "for",  "to",   "at",   "my",  "i",
        "have",    "what", "how",  "does", "from", "about",
    };
    return words;
}

const std::vector<const char*>& bulgarian_stopwords() {
    static const std::vector<const char*> words = {
        "и", "на", "до", "с", "за", "в", "от", "как", "какво", "не", "ли", "при",
    };
    return words;
}

const std::vector<const char*>& drug_name_pool() {
    static const std::vector<const char*> drugs = {
        "veraphen",   "dolextra",   "cardiolol",  "vasoprene",  "gastrozil",
        "neurontex",  "dermacort",  "pulmodil",   "renaflox",   "hematrin",
        "osteomax",   "metaboline", "fertilex",   "cephadol",   "abdomezin",
        "febrexal",   "toravir",    "lymphozan",  "artriden",   "spasmolak",
        "glucanorm",  "urixan",     "bronchelar", "pruritol",   "somnivex",
        "anxiolan",   "reflunate",  "angiprel",   "myorelan",   "nephrodin",
        "cutisal",    "gynodex",    "pedialyte",  "vertigon",   "auralgan",
        "immunerva",  "flexoril",   "tremodex",   "satievex",   "hydronil",
    };
    return drugs;
}

} // namespace vocab

} // namespace medsearch
