// Frozen reference series and statistics. Generated once with an
// independent reference implementation (statsmodels 0.14.6):
//   series 1: AR(1) rho=0.6 plus 0.01*t trend, RandomState(20240817), n=120
//     adfuller(maxlag=8, autolag="AIC"): c -> -5.426661103243 (lag 0),
//                                        ct -> -5.407876192431 (lag 0)
//     kpss(nlags=4): c -> 0.192157920933 (p 0.10), ct -> 0.187025901527 (p 0.020865286927)
//   series 2: AR(2)+MA(1) with 0.02*t trend, RandomState(77001), n=120
//     adfuller(maxlag=8, autolag="AIC"): c -> -5.018204252071 (lag 2),
//                                        ct -> -5.026041247499 (lag 2)
#pragma once

namespace fixtures {

inline constexpr double kSeries1[120] = {
    0, -0.89958186760697489, -1.4199572236160942, -0.81604498329767483,
    -1.6552665244859823, -1.3138665107064689, -0.29987943013959373, 0.64934340437894233,
    0.21469544056673578, 0.33535704321985227, -2.4037929559732358, -1.766968985652879,
    -1.026130391517122, 0.43412373766127887, -0.93943479606239222, -1.1457065140039506,
    1.5403183693649554, 0.52825031969639613, 1.4263123471145942, 0.73730443931909928,
    0.5012660114417935, 0.65647391799292509, 0.4680569830445942, 0.21131085129981861,
    1.4495913911507903, 2.3960211863791794, 0.69244245219812617, 0.97168202666749148,
    2.2087200541564393, 2.0338405541214613, -0.041102032912799846, 1.0232470867273129,
    1.3548826033747432, 2.4936149989209033, 1.345741136934685, 1.4951847916707073,
    2.642018304244365, 1.7580503999964958, 0.42434909340975802, 1.4011949827622878,
    1.597376708915069, 2.4402763960154186, 0.43852494251046409, 0.64937956783130124,
    1.4445220911522634, -0.64485721402986873, -0.29556322029034759, 1.6892589546008823,
    2.7044016417685217, 2.2200356169571975, -0.10586069210320215, 0.26651212062762075,
    1.0381430131629621, 0.20146430254966269, 0.28066371742097779, 1.0826852319930784,
    1.0810838743774811, -0.027556737838835721, 0.88030090913506065, 0.78565259202020599,
    -2.4433036326314927, -2.0654226978901846, -1.2568598704870007, -1.5812194929078007,
    -0.72056428415945606, 0.45503969374496345, 2.0345662772418507, 1.2577105717509425,
    0.17383848740945651, 0.048591255870785166, 0.44389105474554325, 0.49608870308469732,
    0.095513550866841324, -0.75464459164297626, 0.4872323970573802, -0.0075206228629516314,
    0.572920477663306, 1.4493167520263104, 2.9957126363465072, 2.7302359735137669,
    1.842061786654112, 1.6230768081563529, 2.8730018202631307, 2.9728206161230268,
    1.4248140182543554, 1.6018790428440601, 0.45254412313126763, -0.6231043736103018,
    -1.1457720994802703, 0.083730063190322279, 0.67323710265273828, -1.4292096418663602,
    0.66823072065291378, 0.98576993338945385, 1.7181193695473045, 1.1067203688290219,
    1.7096235054694047, -0.27543845054160454, 1.5093613381745397, 0.37301182594785609,
    -0.075367931377630093, -0.1481269916138952, -0.42956645450566722, 0.59357345637822467,
    0.73517225767023064, -0.29131803299386316, -3.0772084137256379, -0.58759526571700493,
    -0.08230425521348983, 0.88117384171529767, 0.27302791461642639, -1.0875182592084147,
    -0.44283908921352477, -0.7762255216619216, -0.96130845432987089, 0.29543233300503458,
    0.33397162421291138, 0.3275257204663532, -0.3845384574582571, -0.80577152568857024};

inline constexpr double kSeries2[120] = {
    0, 0.02, 0.82127405855053492, 0.70345757303008405,
    -0.49176947733270643, -0.94504312231926912, 0.10338280882092081, 1.5670025692274079,
    2.3947068511794081, 1.3141290419491449, -0.22897947211932218, -2.2057336781069816,
    -5.1475936247072074, -5.7131495602631279, -4.5103700106273905, -0.73502823545594231,
    1.1095503869023993, 1.6399277555774345, 0.15902981233809338, 0.50569756255911558,
    0.89707942217282666, 0.85796130661398884, 3.146577932965597, 2.8485745850435964,
    1.5331933524581682, 1.2416702068911356, -0.03977640240636382, 0.86653211575821198,
    1.1115379007592461, 0.2578568539737055, -0.17179439719685119, 0.92105243344001064,
    0.6497186284091413, 0.37279410751850517, 0.23359363733000171, -1.0907235705851925,
    -1.1538405508886707, 0.73936381921046668, 2.2643795649256484, 3.3321512159798985,
    3.4546276058583274, 1.5187422308747807, -0.56606262585086664, -1.5213373581022216,
    -1.5054104580208563, -1.9451884146925513, -4.4431701718524259, -5.7453896313029258,
    -5.03549705129429, -2.2761122269913532, 1.6389688349169638, 5.8876947569486457,
    7.6646912425863061, 7.3652620885923614, 4.1480728791156061, 0.043066301218591896,
    -1.1644954358580089, -0.77726192187916232, 0.70728781137415708, 1.6249090090233742,
    0.96082487447130316, -2.0537004149246085, -2.7499811723397896, -1.8629691567089883,
    2.2014910392494391, 3.795463049093307, 4.0235040279995866, 2.0572803242905708,
    0.068403463475321891, 0.56595699588533144, 2.2129068240295222, 1.9803190208901993,
    0.034777131890934898, -2.4495352471082183, -3.0058789249889419, -1.7417177860705908,
    -0.65391640139559648, -0.054946923653420132, -0.21579144540263218, 0.83328524769217505,
    1.426972133861343, 1.4788674762321437, 0.49673877121095389, 1.0401917612645863,
    3.1640968110583279, 3.4609811042070984, 3.1285693156129764, 3.7923340075841923,
    3.7548094618693204, 3.1429476948137833, 1.9138083576279894, 0.69015366175787674,
    1.3231818712826955, 2.0158393018843079, 1.4160641690762406, 0.94447885328705139,
    1.2721927283805137, 3.5530375045450571, 3.1025547065329122, 0.78122497290835091,
    -1.6373813164062505, -3.1968085780713653, -3.9801840028314315, -5.0063958299734228,
    -2.6340475768581451, -0.36052940830482116, 0.6599585208460943, 0.16467614017761889,
    0.27324341192585355, -0.055393579896141798, -1.2117545182571332, -0.16809167611092679,
    1.7701527427683241, 2.8559426023912389, -0.18535860060885989, -3.2222320091539349,
    -3.1428148347758254, -0.49967996935902415, 1.3625241805723525, 3.3286979667411045};

} // namespace fixtures
