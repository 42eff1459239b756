"""
Seed material for the synthetic corpora.

Preambles and slotted prompt bodies drive the system-prompt Markov chain; the
attribute lists, the agenda template and the unrelated requests drive the
semantic-cache experiments.
"""

# Prompt-style openings shared by many system prompts.
PREAMBLES = [
    "You are",
    "Imagine you are",
    "Act as",
    "Pretend you are",
    "You will act as",
    "Your role is",
    "As an assistant you are",
    "Behave as",
]

# Bodies of system prompts. A body is a sequence of slots; each slot lists
# interchangeable words, any of which may follow any word of the slot before.
# Every preamble may continue into any body, and each body runs on into the next.
PROMPT_BODIES = [
    [
        "a one the your",
        "helpful friendly careful patient",
        "travel support finance study",
        "assistant agent advisor planner",
        "who that which and",
        "plans books reviews organizes",
        "trips meals budgets schedules",
        "for with among around",
        "busy young large remote",
        "families. teams. couples. students.",
        "Always Please Kindly Gently",
        "suggest recommend propose mention",
        "hotels options resources ideas",
        "and plus then also",
        "keep make hold leave",
        "every each any all",
        "answer reply response message",
        "short brief clear calm",
        "and yet but so",
        "friendly. polite. honest. precise.",
    ],
    [
        "an our this my",
        "expert senior seasoned skilled",
        "software data legal medical",
        "reviewer analyst researcher consultant",
        "explains checks summarizes audits",
        "reports code contracts charts",
        "to for before beside",
        "curious worried junior new",
        "managers. clients. readers. customers.",
        "Never Rarely Seldom Hardly",
        "guess speculate assume invent",
        "facts numbers details figures",
        "yet though while whereas",
        "always often gladly openly",
        "cite name quote show",
        "the its one some",
        "source reference document evidence",
        "in using with through",
        "plain simple neutral modest",
        "words. language. terms. sentences.",
    ],
    [
        "a one some another",
        "creative cheerful thoughtful gentle",
        "writing fitness language career",
        "tutor mentor trainer guide",
        "who that which and",
        "helps guides teaches supports",
        "beginners authors learners candidates",
        "improve practice prepare progress",
        "steadily slowly daily weekly",
        "through by with via",
        "small short tiny simple",
        "steps. tasks. goals. lessons.",
        "Let Help Allow Get",
        "them people users everyone",
        "try attempt start finish",
        "each every one the",
        "exercise task problem draft",
        "alone independently first quietly",
        "and but so yet",
        "celebrate praise reward notice",
        "every each any all",
        "win. success. effort. improvement.",
    ],
]

# Four-token names with pairwise distinct tokens.
NAMES = [
    "Alice J. W. Brown",
    "Bruno K. X. Silva",
    "Carmen L. Y. Ortiz",
    "David M. Z. Chen",
    "Elena N. U. Petrova",
    "Farid P. V. Haddad",
    "Grace Q. H. Okafor",
    "Hiroshi R. G. Tanaka",
    "Ingrid S. F. Larsen",
    "Jamal T. E. Wright",
]

# Three-token conditions with pairwise distinct tokens.
CONDITIONS = [
    "congestive heart failure",
    "chronic allergic asthma",
    "severe migraine headaches",
    "recurrent kidney stones",
    "juvenile rheumatoid arthritis",
    "obstructive sleep apnea",
    "iron deficiency anemia",
    "bipolar affective disorder",
    "moderate plaque psoriasis",
    "acute viral bronchitis",
]

# Healthcare agenda template; every word appears once.
AGENDA_TEMPLATE = (
    "please compose a clinic visit agenda for [name] who lives with [condition] covering "
    "diagnosis prognosis then medications allergies plus nutrition exercise and referrals "
    "insurance finally questions followup before discharge today"
)

# Adjacent word pairs a paraphrase may swap; the pairs never touch each other.
AGENDA_SWAPS = [
    ("diagnosis", "prognosis"),
    ("medications", "allergies"),
    ("nutrition", "exercise"),
    ("referrals", "insurance"),
    ("questions", "followup"),
]

# Single-word synonyms applied by paraphrase families that declare them.
SYNONYMS = {
    "compose": ["draft", "prepare"],
    "write": ["draft", "compose"],
    "create": ["make", "build"],
    "short": ["brief", "quick"],
}

# Requests unrelated to the target scenario.
UNRELATED_REQUESTS = [
    "write a short poem about the ocean at sunset",
    "explain how a rainbow forms in simple terms",
    "suggest a name for a small coffee shop near the station",
    "translate good morning into spanish and french",
    "create a packing list for a weekend camping trip in the mountains",
    "draft an e-mail to the landlord about a broken heater",
    "summarize the plot of a classic detective novel",
    "give three tips to improve a cover letter for a designer job",
    "write an out-of-office message for the winter holidays",
    "plan a three day itinerary for rome in september",
    "list five healthy snacks for children after school",
    "explain the difference between stocks and bonds",
    "generate a product section for a bakery business plan",
    "recommend a board game for a family of four",
    "describe how to repot a houseplant without hurting the roots",
    "write a birthday message for a colleague who loves cycling",
    "outline a weekly budget for a student living alone",
    "suggest a weekend workout routine without equipment",
    "explain why the sky looks blue during the day",
    "draft a thank you note after a job interview",
]

# Words that appear only inside filler requests used for cache floods.
FILLER_WORD_COUNT = 512

# Words that appear only inside synthetic documents.
DOCUMENT_WORD_COUNT = 2048

# Instruction placed in the system role of document summarization requests.
SUMMARIZE_INSTRUCTION = "Summarize the following document in five bullet points."
