#include "pdqa/vocab.hpp"

#include <stdexcept>

namespace pdqa {

namespace {

const char* const kPunctuation[] = {
    ".", ",", "!", "?", ";", ":", "'", "\"", "-", "(", ")", "/",
};

// ~1k common English words plus photography and weather terms, so natural
// antonym prompts about picture quality tokenize without unknowns.
const char* const kWords[] = {
    "a", "an", "the", "and", "or", "but", "if", "then",
    "else", "when", "while", "of", "to", "in", "on", "at",
    "by", "for", "with", "about", "against", "between", "into", "through",
    "during", "before", "after", "above", "below", "from", "up", "down",
    "out", "off", "over", "under", "again", "further", "once", "here",
    "there", "all", "any", "both", "each", "few", "more", "most",
    "other", "some", "such", "no", "nor", "not", "only", "own",
    "same", "so", "than", "too", "very", "can", "will", "just",
    "should", "now", "i", "me", "my", "we", "us", "our",
    "you", "your", "he", "him", "his", "she", "her", "it",
    "its", "they", "them", "their", "what", "which", "who", "this",
    "that", "these", "those", "am", "is", "are", "was", "were",
    "be", "been", "have", "has", "had", "do", "does", "did",
    "would", "could", "might", "must", "shall", "may", "yes", "also",
    "because", "until", "unless", "since", "although", "though", "however", "therefore",
    "thus", "indeed", "perhaps", "maybe", "almost", "always", "never", "often",
    "sometimes", "usually", "rarely", "soon", "already", "yet", "still", "even",
    "quite", "rather", "really", "nearly", "far", "away", "back", "forward",
    "together", "apart", "around", "across", "along", "behind", "beyond", "beside",
    "near", "inside", "outside", "within", "without", "toward", "upon", "via",
    "per", "among", "everyone", "everything", "nothing", "something", "anything", "someone",
    "anyone", "nobody", "somewhere", "anywhere", "everywhere", "nowhere", "none", "either",
    "neither", "whether", "despite", "except", "instead", "meanwhile", "otherwise", "zero",
    "one", "two", "three", "four", "five", "six", "seven", "eight",
    "nine", "ten", "twenty", "thirty", "forty", "fifty", "hundred", "thousand",
    "million", "first", "second", "third", "last", "next", "previous", "single",
    "double", "many", "several", "much", "less", "least", "enough", "extra",
    "amount", "pair", "couple", "quarter", "red", "orange", "yellow", "green",
    "blue", "purple", "violet", "pink", "brown", "black", "white", "gray",
    "grey", "golden", "silver", "colorful", "pale", "vivid", "good", "bad",
    "photo", "photograph", "picture", "image", "quality", "sharp", "sharpness", "blurry",
    "blur", "clear", "clean", "dirty", "noisy", "noise", "hazy", "haze",
    "fog", "foggy", "mist", "misty", "smog", "smoke", "smoky", "cloud",
    "cloudy", "bright", "brightness", "dark", "darkness", "dim", "light", "shadow",
    "shade", "contrast", "saturation", "saturated", "color", "colour", "tone", "tint",
    "hue", "detail", "texture", "smooth", "rough", "grain", "grainy", "crisp",
    "soft", "hard", "visible", "invisible", "visibility", "distortion", "distorted", "artifact",
    "natural", "artificial", "realistic", "fade", "vibrant", "dull", "fine", "poor",
    "excellent", "terrible", "awful", "great", "perfect", "flawless", "degraded", "damaged",
    "pristine", "restored", "enhanced", "scene", "scenery", "landscape", "portrait", "camera",
    "lens", "focus", "unfocused", "exposure", "overexposed", "underexposed", "pixel", "resolution",
    "frame", "edge", "corner", "center", "region", "zone", "patch", "global",
    "local", "background", "foreground", "object", "subject", "view", "viewer", "looks",
    "crop", "zoom", "grade", "score", "judge", "assess", "assessment", "evaluate",
    "evaluation", "compare", "comparison", "reference", "blind", "opinion", "mean", "average",
    "time", "year", "month", "week", "day", "night", "morning", "hour",
    "minute", "moment", "today", "tomorrow", "yesterday", "season", "spring", "summer",
    "autumn", "winter", "date", "past", "present", "future", "age", "period",
    "early", "late", "world", "earth", "water", "fire", "air", "wind",
    "windy", "rain", "rainy", "snow", "snowy", "storm", "stormy", "thunder",
    "lightning", "ice", "icy", "frost", "sun", "sunny", "sunshine", "sunlight",
    "sunrise", "sunset", "moon", "star", "sky", "horizon", "sea", "ocean",
    "river", "lake", "wave", "beach", "coast", "shore", "island", "mountain",
    "hill", "valley", "forest", "wood", "wooden", "tree", "branch", "leaf",
    "leaves", "flower", "grass", "field", "desert", "stone", "rock", "rocky",
    "sand", "sandy", "mud", "muddy", "dust", "dusty", "soil", "ground",
    "land", "nature", "weather", "climate", "atmosphere", "humidity", "humid", "temperature",
    "heat", "steam", "flood", "breeze", "overcast", "dawn", "dusk", "twilight",
    "glow", "gloomy", "murky", "crystal", "road", "street", "path", "trail",
    "highway", "bridge", "city", "town", "village", "country", "nation", "state",
    "border", "map", "place", "space", "area", "location", "house", "home",
    "tower", "wall", "door", "gate", "window", "roof", "floor", "ceiling",
    "room", "kitchen", "bathroom", "bedroom", "garden", "yard", "fence", "school",
    "college", "university", "office", "shop", "store", "market", "farm", "church",
    "hospital", "station", "airport", "port", "park", "playground", "theater", "museum",
    "library", "restaurant", "hotel", "factory", "car", "bus", "truck", "train",
    "boat", "ship", "plane", "airplane", "bicycle", "bike", "wheel", "engine",
    "motor", "machine", "device", "tool", "computer", "screen", "monitor", "display",
    "phone", "telephone", "television", "radio", "wire", "switch", "button", "signal",
    "table", "chair", "bench", "sofa", "couch", "desk", "shelf", "lamp",
    "clock", "watch", "mirror", "bottle", "cup", "glass", "plate", "bowl",
    "spoon", "fork", "knife", "pan", "pot", "oven", "stove", "fridge",
    "box", "bag", "key", "lock", "rope", "chain", "cloth", "fabric",
    "plastic", "metal", "iron", "steel", "gold", "paper", "book", "page",
    "pen", "pencil", "letter", "card", "ticket", "money", "coin", "wallet",
    "umbrella", "hat", "coat", "jacket", "shirt", "dress", "pants", "shoe",
    "belt", "ring", "man", "woman", "child", "children", "boy", "girl",
    "baby", "adult", "family", "mother", "father", "parent", "son", "daughter",
    "brother", "sister", "friend", "people", "person", "human", "crowd", "group",
    "team", "member", "leader", "teacher", "student", "doctor", "driver", "police",
    "artist", "writer", "worker", "engineer", "scientist", "body", "head", "face",
    "eye", "ear", "nose", "mouth", "tooth", "teeth", "lip", "hair",
    "neck", "shoulder", "arm", "elbow", "hand", "finger", "thumb", "chest",
    "heart", "blood", "leg", "knee", "foot", "feet", "skin", "bone",
    "brain", "voice", "smile", "laugh", "cry", "tear", "animal", "dog",
    "cat", "horse", "cow", "sheep", "chicken", "bird", "fish", "bear",
    "lion", "tiger", "wolf", "fox", "deer", "rabbit", "mouse", "snake",
    "spider", "bee", "ant", "fly", "butterfly", "food", "meal", "breakfast",
    "lunch", "dinner", "bread", "cheese", "milk", "egg", "meat", "fruit",
    "apple", "vegetable", "rice", "wheat", "sugar", "salt", "tea", "coffee",
    "juice", "go", "come", "run", "walk", "jump", "climb", "stand",
    "sit", "lie", "lying", "sleep", "wake", "rest", "eat", "drink",
    "cook", "bake", "make", "build", "break", "open", "close", "start",
    "stop", "finish", "continue", "move", "turn", "look", "see", "watch",
    "observe", "notice", "hear", "listen", "speak", "say", "tell", "talk",
    "ask", "reply", "read", "write", "draw", "paint", "show", "hide",
    "find", "search", "seek", "lose", "give", "take", "bring", "carry",
    "hold", "put", "set", "get", "keep", "let", "help", "work",
    "play", "learn", "teach", "study", "know", "think", "understand", "believe",
    "remember", "forget", "feel", "touch", "smell", "taste", "love", "like",
    "hate", "want", "need", "hope", "wish", "try", "use", "choose",
    "decide", "change", "grow", "become", "seem", "appear", "happen", "create",
    "destroy", "die", "live", "stay", "leave", "left", "arrive", "return",
    "travel", "visit", "follow", "lead", "send", "receive", "buy", "sell",
    "pay", "cost", "spend", "save", "count", "measure", "weigh", "test",
    "check", "fix", "cut", "push", "pull", "throw", "catch", "drop",
    "fall", "rise", "fill", "cover", "wash", "wear", "shine", "reflect",
    "capture", "record", "print", "scan", "share", "improve", "reduce", "increase",
    "remove", "remain", "contain", "include", "big", "large", "huge", "giant",
    "enormous", "small", "little", "tiny", "long", "short", "tall", "wide",
    "narrow", "thick", "thin", "deep", "shallow", "heavy", "full", "empty",
    "hot", "cold", "warm", "cool", "wet", "dry", "new", "old",
    "young", "ancient", "modern", "fast", "slow", "quick", "rapid", "sudden",
    "high", "low", "right", "wrong", "true", "false", "real", "fake",
    "easy", "difficult", "simple", "complex", "strong", "weak", "safe", "dangerous",
    "happy", "sad", "angry", "calm", "quiet", "loud", "silent", "busy",
    "free", "rich", "expensive", "cheap", "beautiful", "pretty", "ugly", "nice",
    "kind", "gentle", "pleasant", "strange", "weird", "normal", "common", "rare",
    "special", "important", "useful", "useless", "possible", "impossible", "certain", "ready",
    "whole", "solid", "complete", "incomplete", "equal", "different", "similar", "exact",
    "typical", "unique", "main", "major", "minor", "general", "particular", "public",
    "private", "foreign", "familiar", "lovely", "wonderful", "amazing", "interesting", "boring",
    "funny", "serious", "careful", "careless", "lucky", "proud", "brave", "afraid",
    "nervous", "hungry", "healthy", "sick", "alive", "dead", "fresh", "sweet",
    "straight", "curved", "round", "flat", "blunt", "sloped", "steep", "level",
    "direction", "north", "south", "east", "west", "reverse", "middle", "position",
    "distance", "length", "width", "height", "depth", "weight", "speed", "energy",
    "power", "force", "pressure", "motion", "action", "activity", "event", "stuff",
    "matter", "material", "substance", "element", "example", "case", "fact", "truth",
    "reason", "cause", "effect", "result", "purpose", "goal", "plan", "project",
    "task", "job", "problem", "solution", "method", "way", "manner", "style",
    "type", "sort", "class", "layer", "degree", "step", "stage", "point",
    "line", "row", "column", "circle", "square", "triangle", "shape", "form",
    "pattern", "structure", "system", "order", "list", "name", "number", "figure",
    "sign", "symbol", "mark", "label", "word", "sentence", "phrase", "story",
    "news", "message", "report", "music", "song", "sound", "tune", "rhythm",
    "dance", "game", "sport", "ball", "race", "prize", "gift", "party",
    "holiday", "journey", "trip", "adventure", "idea", "question", "answer", "mind",
    "memory", "dream", "emotion", "sense", "part", "piece", "half", "side",
    "top", "bottom", "front", "rear", "end", "beginning", "limit", "range",
    "scale", "rate", "value", "price", "total", "sum",

};

}  // namespace

Vocabulary::Vocabulary() {
  auto push = [this](const std::string& token) {
    if (ids_.contains(token)) return;
    ids_.emplace(token, tokens_.size());
    tokens_.push_back(token);
  };
  push("<pad>");
  push("<bos>");
  push("<eos>");
  push("<unk>");
  for (const char* p : kPunctuation) push(p);
  for (const char* w : kWords) push(w);
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocab;
  return vocab;
}

std::size_t Vocabulary::id_of(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(std::size_t id) const {
  if (id >= tokens_.size())
    throw std::invalid_argument("token_of: id " + std::to_string(id) +
                                " out of range");
  return tokens_[id];
}

}  // namespace pdqa
